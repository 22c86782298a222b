"""Tail-correlation estimators: pair canaries, grids, invariances, the
nearest-neighbor cascade probability, and the class verifier."""

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtri

from stmix.chi import (
    ChiGrid,
    GridConfig,
    chi_grid,
    chi_star,
    empirical_chi_pair,
    nearest_neighbors,
    rmse_chi_star,
    same_site_lag_chi,
    verify_dependence_class,
    year_block_bootstrap,
)
from stmix.data import PanelDataset
from stmix.errors import DomainError, LayoutError, PrecisionError
from stmix.mixture import CopulaSpec, simulate_copula


def panel_from(values, coords=None, mask=None, scale="uniform"):
    values = np.asarray(values, dtype=float)
    n = values.shape[2]
    if coords is None:
        coords = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    if mask is None:
        mask = np.zeros(values.shape, dtype=bool)
    return PanelDataset(
        site_ids=[f"S{i}" for i in range(n)],
        coords=np.asarray(coords, float),
        values=values,
        mask=mask,
        scale=scale,
    )


# --------------------------------------------------------------------------
# pair estimator canaries (counts verified by hand)


CANARY_A = [0.9, 0.2, 0.8, 0.1, 0.7, 0.3]
CANARY_B = [0.85, 0.3, 0.1, 0.9, 0.6, 0.2]


def canary_panel():
    vals = np.array([[[a, b] for a, b in zip(CANARY_A, CANARY_B)]])
    return panel_from(vals)


def test_pair_chi_lag0_hand_count():
    r = empirical_chi_pair(canary_panel(), (0, 1), lag=0, u=0.5)
    # joint exceedances 2 of 6 slots; 2 / (6 * 0.5)
    assert r.chi_hat == pytest.approx(2.0 / 3.0)
    assert r.n_effective == 6
    assert not r.clipped


def test_pair_chi_lag1_both_orientations():
    r = empirical_chi_pair(canary_panel(), (0, 1), lag=1, u=0.5)
    # one joint hit per orientation over 5 + 5 pairings
    assert r.chi_hat == pytest.approx(0.4)
    assert r.n_effective == 10


def test_pair_chi_same_site_lag2():
    r = empirical_chi_pair(canary_panel(), (0, 0), lag=2, u=0.5)
    assert r.chi_hat == pytest.approx(1.0)
    assert r.n_effective == 4


def test_pair_chi_same_site_lag0_rejected():
    with pytest.raises(DomainError):
        empirical_chi_pair(canary_panel(), (0, 0), lag=0, u=0.5)


def test_pair_chi_never_crosses_years():
    # two years glued so a cross-year pairing would create a false joint hit:
    # year 1 ends high at site 0, year 2 starts high at site 1
    y1 = np.array([[0.1, 0.1], [0.1, 0.1], [0.95, 0.1]])
    y2 = np.array([[0.1, 0.95], [0.1, 0.1], [0.1, 0.1]])
    panel = panel_from(np.stack([y1, y2]))
    r = empirical_chi_pair(panel, (0, 1), lag=1, u=0.5)
    assert r.chi_hat == 0.0  # cross-year hit must not be counted


def test_pair_chi_rank_invariance():
    # chi depends on ranks only: any strictly increasing transform is a no-op
    rng = np.random.default_rng(0)
    vals = rng.uniform(size=(3, 30, 2))
    a = empirical_chi_pair(panel_from(vals), (0, 1), lag=1, u=0.8)
    warped = panel_from(np.exp(5 * vals) / np.exp(5), scale="uniform")
    b = empirical_chi_pair(warped, (0, 1), lag=1, u=0.8)
    assert a.chi_hat == b.chi_hat
    assert a.n_effective == b.n_effective


def test_pair_chi_comonotone_is_one():
    rng = np.random.default_rng(1)
    col = rng.uniform(size=(4, 25, 1))
    vals = np.concatenate([col, col], axis=2)
    r = empirical_chi_pair(panel_from(vals), (0, 1), lag=0, u=0.8)
    assert r.chi_hat == pytest.approx(1.0)


def test_pair_chi_independent_near_one_minus_u():
    rng = np.random.default_rng(2)
    vals = rng.uniform(size=(200, 100, 2))
    r = empirical_chi_pair(panel_from(vals), (0, 1), lag=0, u=0.9)
    assert r.chi_hat == pytest.approx(0.1, abs=0.01)


def test_pair_chi_masked_slots_excluded():
    vals = np.array([[[0.9, 0.9], [0.9, 0.9], [0.2, 0.2]]])
    mask = np.zeros_like(vals, dtype=bool)
    mask[0, 0, 1] = True  # kill one joint slot
    panel = panel_from(vals, mask=mask)
    r = empirical_chi_pair(panel, (0, 1), lag=0, u=0.5)
    assert r.n_effective == 2


def test_pair_chi_gaussian_quadrature_oracle():
    # bivariate normal, rho = 0.5: compare against numerical integration
    rho, u, n = 0.5, 0.9, 400_000
    rng = np.random.default_rng(3)
    e = rng.standard_normal((n, 2))
    z2 = rho * e[:, 0] + np.sqrt(1 - rho**2) * e[:, 1]
    uni = stats.norm.cdf(np.stack([e[:, 0], z2], axis=1))
    panel = panel_from(uni[:, None, :])
    got = empirical_chi_pair(panel, (0, 1), lag=0, u=u).chi_hat
    z = ndtri(u)
    joint = stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([z, z])
    want = (1 - 2 * u + joint) / (1 - u)
    se = np.sqrt(want * (1 - u) * (1 - want * (1 - u)) / n) / (1 - u)
    assert abs(got - want) < 3 * se


# --------------------------------------------------------------------------
# grid


def test_chi_grid_shape_and_geometry():
    rng = np.random.default_rng(4)
    vals = rng.uniform(size=(5, 40, 6))
    coords = rng.uniform(0, 20, size=(6, 2))
    cfg = GridConfig(u_levels=(0.8, 0.9), n_dist_bins=4, lags=(0, 1, 2))
    g = chi_grid(panel_from(vals, coords=coords), cfg)
    assert g.values.shape == (2, 4, 3)
    assert g.dist_edges.shape == (5,)
    assert g.dist_edges[0] == 0.0
    d = np.sqrt(((coords[:, None] - coords[None]) ** 2).sum(-1))
    assert g.dist_edges[-1] == pytest.approx(d.max() / 2)


def test_chi_grid_site_permutation_invariant():
    rng = np.random.default_rng(5)
    vals = rng.uniform(size=(4, 30, 5))
    coords = rng.uniform(0, 15, size=(5, 2))
    cfg = GridConfig(u_levels=(0.9,), n_dist_bins=3, lags=(0, 1))
    g1 = chi_grid(panel_from(vals, coords=coords), cfg)
    perm = np.array([3, 0, 4, 1, 2])
    g2 = chi_grid(panel_from(vals[:, :, perm], coords=coords[perm]), cfg)
    np.testing.assert_array_equal(np.nan_to_num(g1.values), np.nan_to_num(g2.values))
    np.testing.assert_array_equal(g1.n_pairs, g2.n_pairs)


def test_chi_grid_matches_pair_estimator():
    # a two-site panel has one pair; the grid cell must equal the pair value
    rng = np.random.default_rng(6)
    vals = rng.uniform(size=(6, 50, 2))
    coords = np.array([[0.0, 0.0], [3.0, 0.0]])
    cfg = GridConfig(u_levels=(0.85,), n_dist_bins=2, lags=(0, 1), max_dist=8.0)
    g = chi_grid(panel_from(vals, coords=coords), cfg)
    pair0 = empirical_chi_pair(panel_from(vals, coords=coords), (0, 1), 0, 0.85)
    pair1 = empirical_chi_pair(panel_from(vals, coords=coords), (0, 1), 1, 0.85)
    # distance 3 lands in bin [0, 4)
    assert g.values[0, 0, 0] == pytest.approx(pair0.chi_hat)
    assert g.values[0, 0, 1] == pytest.approx(pair1.chi_hat)
    assert np.all(np.isnan(g.values[0, 1, :]))  # empty far bin
    assert g.n_pairs[0, 0] == 1 and g.n_pairs[1, 0] == 0


def test_chi_grid_bin_edges_left_closed():
    # a pair exactly on an interior edge belongs to the right-hand bin
    vals = np.random.default_rng(7).uniform(size=(3, 20, 2))
    coords = np.array([[0.0, 0.0], [5.0, 0.0]])
    cfg = GridConfig(u_levels=(0.8,), n_dist_bins=2, lags=(0,), max_dist=10.0)
    g = chi_grid(panel_from(vals, coords=coords), cfg)
    assert g.n_pairs[1, 0] == 1 and g.n_pairs[0, 0] == 0


def test_chi_grid_pair_at_max_dist_excluded():
    vals = np.random.default_rng(8).uniform(size=(3, 20, 2))
    coords = np.array([[0.0, 0.0], [10.0, 0.0]])
    cfg = GridConfig(u_levels=(0.8,), n_dist_bins=2, lags=(0,), max_dist=10.0)
    g = chi_grid(panel_from(vals, coords=coords), cfg)
    assert g.n_pairs.sum() == 0
    assert np.all(np.isnan(g.values))


def test_chi_grid_csv_json_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    vals = rng.uniform(size=(4, 30, 4))
    coords = rng.uniform(0, 12, size=(4, 2))
    g = chi_grid(panel_from(vals, coords=coords), GridConfig(u_levels=(0.9,), n_dist_bins=3, lags=(0, 1)))
    back = ChiGrid.from_json(g.to_json())
    np.testing.assert_array_equal(np.nan_to_num(back.values), np.nan_to_num(g.values))
    np.testing.assert_allclose(back.dist_edges, g.dist_edges)
    assert back.u_levels == g.u_levels and back.lags == g.lags
    g.to_csv(tmp_path / "grid.csv")
    text = (tmp_path / "grid.csv").read_text().splitlines()
    assert text[0] == "level,u,dist_lo,dist_hi,lag,chi,n_pairs"
    assert len(text) == 1 + 1 * 3 * 2


def test_chi_grid_needs_two_sites():
    vals = np.random.default_rng(10).uniform(size=(2, 10, 1))
    with pytest.raises(LayoutError):
        chi_grid(panel_from(vals))


# --------------------------------------------------------------------------
# same-site curve, neighbors, cascade probability


def test_same_site_lag_chi_matches_pairs():
    rng = np.random.default_rng(11)
    vals = rng.uniform(size=(5, 40, 3))
    panel = panel_from(vals)
    got = same_site_lag_chi(panel, (0.8,), (1, 2))
    for ki, lag in enumerate((1, 2)):
        per_site = [empirical_chi_pair(panel, (i, i), lag, 0.8).chi_hat for i in range(3)]
        assert got[0, ki] == pytest.approx(np.mean(per_site))


def test_nearest_neighbors_hand_layout():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [1.2, 1.2]])
    nb = nearest_neighbors(coords, 2)
    assert set(nb[0]) == {1, 2}
    assert set(nb[3]) == {4, 2} or set(nb[3]) == {4, 1}  # ties broken stably
    assert nb.shape == (5, 2)


def test_nearest_neighbors_needs_enough_sites():
    with pytest.raises(LayoutError):
        nearest_neighbors(np.zeros((3, 2)) + np.arange(3)[:, None], 4)


def test_chi_star_hand_case():
    # center site 0 with neighbors 1 and 2 (k=2); lag 1
    # exceed at t-1 on site 0: days 0,2 ; cascade requires both neighbors
    # exceed at t: day1 -> yes (both 0.9), day3 -> no
    vals = np.array(
        [
            [
                [0.9, 0.1, 0.1],
                [0.1, 0.9, 0.9],
                [0.9, 0.1, 0.1],
                [0.1, 0.9, 0.1],
            ]
        ]
    )
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    p = panel_from(vals, coords=coords)
    got = chi_star(p, lag=1, u=0.5, n_neighbors=2)
    assert got[0] == pytest.approx(0.5)


def test_chi_star_lag0_conditioning():
    vals = np.array(
        [[[0.9, 0.9, 0.9], [0.9, 0.1, 0.9], [0.1, 0.9, 0.1], [0.1, 0.1, 0.1]]]
    )
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    got = chi_star(panel_from(vals, coords=coords), lag=0, u=0.5, n_neighbors=2)
    # site 0 exceeds its median on days 0,1; both neighbors exceed only on day 0
    assert got[0] == pytest.approx(0.5)


def test_rmse_chi_star_formula():
    emp = np.array([0.2, 0.4, np.nan])
    sims = np.array([[0.1, 0.5, 0.3], [0.3, 0.3, 0.2]])
    # site0: sqrt(mean((0.1-0.2)^2,(0.3-0.2)^2)) = 0.1; site1: 0.1; nan dropped
    assert rmse_chi_star(emp, sims) == pytest.approx(0.1)


def test_rmse_chi_star_all_nan_rejected():
    with pytest.raises(DomainError):
        rmse_chi_star(np.array([np.nan]), np.array([[np.nan]]))


def test_year_block_bootstrap_shape_and_determinism():
    rng = np.random.default_rng(12)
    vals = rng.uniform(size=(6, 20, 3))
    panel = panel_from(vals)

    def stat(p):
        return p.values.mean(axis=(0, 1))

    a = year_block_bootstrap(panel, stat, B=7, seed=3)
    b = year_block_bootstrap(panel, stat, B=7, seed=3)
    assert a.shape == (7, 3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a[0], a[1])


# --------------------------------------------------------------------------
# class verifier


def test_verify_classes_m1_delta07():
    spec = CopulaSpec(variant="M1", delta=0.7, phi=1.0, psi1=9.0, psi2=0.5)
    for mode, want in (("space", "AD"), ("time", "AI"), ("space_time", "AI")):
        rep = verify_dependence_class(spec, mode, n_pairs=600_000, seed=5)
        assert rep.verdict == want
        assert rep.expected == want
        assert rep.match


def test_verify_classes_precision_gate():
    spec = CopulaSpec(variant="M1", delta=0.7, phi=1.0, psi1=9.0, psi2=0.5)
    with pytest.raises(PrecisionError):
        verify_dependence_class(spec, "space", n_pairs=10_000, seed=0)


def test_verify_classes_report_fields():
    spec = CopulaSpec(variant="M3", delta=0.3, phi=1.0, psi1=9.0, psi2=0.5)
    rep = verify_dependence_class(spec, "space", distance=9.0, n_pairs=600_000, seed=6)
    assert rep.mode == "space" and rep.distance == 9.0
    assert len(rep.chi) == len(rep.u_levels) == len(rep.se) == 3
    assert rep.verdict == "AI" and rep.match
    assert np.isfinite(rep.eta_slope)


def test_chi_grid_on_copula_panel_decays():
    # dependence must fall with distance on average at the top level
    spec = CopulaSpec(variant="M3", delta=0.3, phi=1.0, psi1=6.0, psi2=0.5)
    rng = np.random.default_rng(13)
    coords = rng.uniform(0, 40, size=(12, 2))
    panel = simulate_copula(spec, coords, 40, 60, seed=7)
    g = chi_grid(panel, GridConfig(u_levels=(0.9,), n_dist_bins=4, lags=(0,)))
    vals = g.values[0, :, 0]
    ok = ~np.isnan(vals)
    assert vals[ok][0] > vals[ok][-1]
