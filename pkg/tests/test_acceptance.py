"""Acceptance gate: twelve end-to-end checks, one test per criterion.

Each test prints a single summary line (visible with -v as the PASSED/FAILED
status, and in captured output on failure). Networks used by the recovery,
coverage, and selection studies are trained once and cached under
tests/_cache; a cold run takes ~15 extra minutes on one core.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtri

sys.path.insert(0, str(Path(__file__).parent))
from conftest import cached_estimator

from stmix.chi import GridConfig, chi_grid, empirical_chi_pair, verify_dependence_class
from stmix.config import Budgets, ModelConfig, RunConfig, TrainSettings
from stmix.data import PanelDataset
from stmix.estimator import bootstrap, estimate, estimate_panel
from stmix.fields import FieldSpec, simulate_gaussian
from stmix.kernels import (
    SeparableSTKernel,
    SpatialKernel,
    TemporalKernel,
    build_covariance,
    pairwise_distances,
)
from stmix.margins import fit_gpd_mle
from stmix.mixture import (
    CopulaSpec,
    _CopulaSampler,
    classify_dependence,
    marginal_cdf,
    mix_direct,
    mix_log,
    simulate_copula,
    simulate_marginal_values,
)
from stmix.network import ChiNetwork, NetworkConfig, gradient_check
from stmix.pipelines import pipeline_fit
from stmix.rng import derive_seed, substream

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def layout15() -> np.ndarray:
    return np.random.default_rng(99).uniform(0.0, 40.0, size=(15, 2))


def test_c01_marginal_law_oracle():
    """One-point simulations follow the closed-form mixture distribution."""
    worst = 0.0
    for delta in (0.2, 0.5, 0.8):
        spec = CopulaSpec("M1", delta, 1.0, 9.0, 0.3)
        x = simulate_marginal_values(spec, 1_000_000, seed=11)
        ks = stats.kstest(marginal_cdf(x, delta), "uniform").statistic
        worst = max(worst, ks)
        assert ks < 0.005, f"KS {ks:.5f} at delta={delta}"
    print(f"criterion 1 marginal law: worst KS {worst:.5f} < 0.005")


def test_c02_log_form_equivalence():
    """Log-additive and power-product mixing agree to 1e-9 relative."""
    worst = 0.0
    for variant in ("M1", "M5"):
        spec = CopulaSpec(variant, 0.577, 1.0, 9.0, 0.4)
        coords = np.random.default_rng(4).uniform(0, 30, (10, 2))
        sampler = _CopulaSampler(spec, coords, 20)
        r_exp, w_exp = sampler.year_exponentials(17, 0)
        r_b = r_exp[:, None] if spec.r_on_space else r_exp[None, :]
        direct = mix_direct(np.exp(r_b), np.exp(w_exp), spec.delta)
        logged = np.exp(mix_log(r_b, w_exp, spec.delta))
        rel = float(np.max(np.abs(direct - logged) / direct))
        worst = max(worst, rel)
        assert rel < 1e-9, f"{variant}: relative gap {rel:.2e}"
    print(f"criterion 2 log-form equivalence: worst relative gap {worst:.2e} < 1e-9")


def test_c03_kronecker_simulation():
    """Factored sampling equals dense Cholesky; its draws have the right covariance."""
    rng = np.random.default_rng(7)
    kernel = SeparableSTKernel(SpatialKernel(scale=6.0), TemporalKernel(scale=1.0))
    coords8 = rng.uniform(0, 25, (8, 2))
    times8 = np.arange(8.0)
    spec = FieldSpec(coords=coords8, times=times8, kernel=kernel)
    a = simulate_gaussian(spec, seed=3, method="kronecker").values
    b = simulate_gaussian(spec, seed=3, method="dense").values
    gap = float(np.max(np.abs(a - b)))
    assert gap < 1e-10, f"kronecker vs dense gap {gap:.2e}"

    coords3 = rng.uniform(0, 15, (3, 2))
    times4 = np.arange(4.0)
    small = FieldSpec(coords=coords3, times=times4, kernel=kernel)
    draws = np.stack(
        [simulate_gaussian(small, seed=s).values.ravel() for s in range(200_000)], axis=0
    )
    emp = np.cov(draws, rowvar=False)
    want = build_covariance(small.kernel, coords3, times4).full
    cov_gap = float(np.max(np.abs(emp - want)))
    assert cov_gap < 0.03, f"empirical covariance gap {cov_gap:.4f}"
    print(f"criterion 3 kronecker: path gap {gap:.2e} < 1e-10, covariance gap {cov_gap:.4f} < 0.03")


def test_c04_chi_oracle_gaussian_pair():
    """Empirical tail correlation matches bivariate-normal numerical integration."""
    rho, u, n = 0.5, 0.9, 1_000_000
    rng = np.random.default_rng(3)
    e = rng.standard_normal((n, 2))
    z2 = rho * e[:, 0] + np.sqrt(1 - rho**2) * e[:, 1]
    uni = stats.norm.cdf(np.stack([e[:, 0], z2], axis=1))
    panel = PanelDataset(
        site_ids=["A", "B"],
        coords=np.array([[0.0, 0.0], [1.0, 0.0]]),
        values=uni[None, :, :],
        mask=np.zeros((1, n, 2), dtype=bool),
        scale="uniform",
    )
    got = empirical_chi_pair(panel, (0, 1), lag=0, u=u).chi_hat
    z = ndtri(u)
    joint = stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([z, z])
    want = (1 - 2 * u + joint) / (1 - u)
    se = np.sqrt(want * (1 - u) * (1 - want * (1 - u)) / n) / (1 - u)
    assert abs(got - want) < 3 * se, f"chi {got:.5f} vs oracle {want:.5f} (3SE {3*se:.5f})"
    print(f"criterion 4 chi oracle: |{got:.5f} - {want:.5f}| = {abs(got-want):.5f} < 3SE {3*se:.5f}")


def test_c05_classification_verdicts():
    """Simulated tail behavior reproduces the limiting-class table rows."""
    rows = [("M1", 0.7), ("M3", 0.4), ("M4", 0.3), ("M2", 0.7)]
    checked = 0
    for variant, delta in rows:
        spec = CopulaSpec(variant, delta, 1.0, 9.0, 0.3)
        expected = classify_dependence(spec)
        for mi, mode in enumerate(("space", "time", "space_time")):
            rep = verify_dependence_class(
                spec,
                mode,
                distance=9.0,
                lag=1.0,
                n_pairs=1_000_000,
                seed=derive_seed(2024, variant == "M1", mi, int(delta * 10)),
            )
            assert rep.expected == getattr(expected, "in_" + mode)
            assert rep.match, (
                f"{variant} delta={delta} {mode}: verdict {rep.verdict} != "
                f"expected {rep.expected}, chi ladder {rep.chi}"
            )
            checked += 1
    print(f"criterion 5 classification: {checked}/12 verdicts match the class table")


def test_c06_delta_recovery(layout15):
    """Networks pin the mixture weight to the correct regime on fresh data."""
    nets = {
        "M1": cached_estimator("M1", layout15, 10, 60, K=5000, seed=101),
        "M3": cached_estimator("M3", layout15, 10, 60, K=5000, seed=102),
    }
    seeds = {"M1": 777, "M3": 778}
    lines = []
    for variant, est in nets.items():
        for delta in (0.2, 0.8):
            spec = CopulaSpec(variant, delta, 1.0, 7.0, 0.4)
            hats = np.array(
                [
                    estimate_panel(
                        est,
                        simulate_copula(
                            spec, layout15, 10, 60, derive_seed(seeds[variant], int(delta * 10), r)
                        ),
                    )["delta"]
                    for r in range(50)
                ]
            )
            side = float(np.mean((hats > 0.5) == (delta > 0.5)))
            med = float(np.median(np.abs(hats - delta)))
            lines.append(f"{variant}@{delta}: side {side:.2f}, median err {med:.3f}")
            assert side >= 0.90, f"{variant} delta={delta}: correct side only {side:.2f}"
            assert med <= 0.12, f"{variant} delta={delta}: median |err| {med:.3f}"
    print("criterion 6 delta recovery: " + "; ".join(lines))


def test_c07_consistency_trend(layout15):
    """More replicated years tighten the weakly identified temporal scale."""
    truth = CopulaSpec("M1", 0.7, 1.0, 7.0, 0.4)
    iqrs = {}
    for n_years, seed in ((20, 103), (100, 104)):
        est = cached_estimator("M1", layout15, n_years, 60, K=3000, seed=seed)
        psi2 = [
            estimate_panel(
                est, simulate_copula(truth, layout15, n_years, 60, derive_seed(880, n_years, r))
            )["psi2"]
            for r in range(50)
        ]
        q75, q25 = np.percentile(psi2, [75, 25])
        iqrs[n_years] = float(q75 - q25)
    assert iqrs[100] < iqrs[20], f"IQR did not shrink: {iqrs}"
    print(f"criterion 7 consistency: psi2 IQR {iqrs[20]:.4f} (N=20) -> {iqrs[100]:.4f} (N=100)")


def test_c08_gradient_check():
    """Backpropagated gradients agree with central finite differences."""
    cfg = NetworkConfig(in_channels=2, height=4, width=3, conv_filters=3, dense_units=(8, 5), init_seed=7)
    net = ChiNetwork(cfg)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 2, 4, 3))
    y = rng.uniform(size=(2, 4))
    err = gradient_check(net, x, y)
    assert err < 1e-4, f"gradient check {err:.2e}"
    print(f"criterion 8 gradients: max relative error {err:.2e} < 1e-4")


def test_c09_gpd_recovery():
    """Tail MLE is unbiased at the application's scale and shape."""
    sigma, xi, n_exc, reps = 46.34, 0.114, 5520, 200
    sig_hats, xi_hats, in_sig, in_xi = [], [], 0, 0
    for r in range(reps):
        rng = substream(909, r)
        exc = sigma / xi * ((1.0 - rng.random(n_exc)) ** (-xi) - 1.0)
        fit = fit_gpd_mle(exc)
        sig_hats.append(fit.sigma)
        xi_hats.append(fit.xi)
        in_sig += int(37.97 <= fit.sigma <= 62.19)
        in_xi += int(-0.026 <= fit.xi <= 0.211)
    bias_s = abs(float(np.mean(sig_hats)) - sigma)
    bias_x = abs(float(np.mean(xi_hats)) - xi)
    assert bias_s < 1.0, f"sigma bias {bias_s:.3f}"
    assert bias_x < 0.01, f"xi bias {bias_x:.4f}"
    assert in_sig >= 190, f"sigma inside reference interval only {in_sig}/200"
    assert in_xi >= 190, f"xi inside reference interval only {in_xi}/200"
    print(
        f"criterion 9 tail MLE: |bias| sigma {bias_s:.3f} < 1.0, xi {bias_x:.4f} < 0.01; "
        f"inside ranges {in_sig}/200 and {in_xi}/200"
    )


def test_c10_bootstrap_coverage(layout15):
    """Percentile intervals for the mixture weight have near-nominal coverage."""
    est = cached_estimator("M1", layout15, 10, 60, K=12000, seed=105, epochs=60)
    delta0 = 0.6
    spec = CopulaSpec("M1", delta0, 1.0, 8.0, 0.5)
    covered = 0
    for r in range(100):
        panel = simulate_copula(spec, layout15, 10, 60, derive_seed(4040, r))
        theta_hat = estimate_panel(est, panel)
        res = bootstrap(est, theta_hat, B=100, seed=derive_seed(4041, r))
        lo, hi = res.intervals["delta"]
        covered += int(lo <= delta0 <= hi)
    assert 80 <= covered <= 97, f"coverage {covered}/100 outside [80, 97]"
    print(f"criterion 10 bootstrap: 0.90 interval covered {covered}/100 (gate 80..97)")


def test_c11_model_selection_self_consistency(layout15):
    """Held-out-years comparison prefers the generating model."""
    import warnings

    ests = {
        "M1": cached_estimator("M1", layout15, 10, 60, K=5000, seed=101),
        "M3": cached_estimator("M3", layout15, 10, 60, K=5000, seed=102),
    }
    gc = GridConfig(max_dist=float(pairwise_distances(layout15).max()) / 2.0)
    truth = CopulaSpec("M3", 0.45, 1.0, 9.0, 0.4)
    N, h, folds, sims = 10, 2, 10, 100
    wins = 0
    for rep in range(20):
        panel = simulate_copula(truth, layout15, N, 60, derive_seed(6060, rep))
        rmse = {v: [] for v in ests}
        for f in range(folds):
            rng = np.random.default_rng(derive_seed(6061, rep, f))
            held = np.sort(rng.choice(N, size=h, replace=False))
            keep = np.setdiff1d(np.arange(N), held)
            g_tr = chi_grid(panel.subset_years(keep), gc)
            g_ho = chi_grid(panel.subset_years(held), gc)
            for ci, (variant, est) in enumerate(ests.items()):
                th = estimate(est, g_tr)
                spec = CopulaSpec(variant, th["delta"], th["phi"], th["psi1"], th["psi2"])
                acc = [
                    chi_grid(
                        simulate_copula(spec, layout15, h, 60, derive_seed(6062, rep, f, ci, s)), gc
                    ).values
                    for s in range(sims)
                ]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    mg = np.nanmean(np.stack(acc), axis=0)
                both = ~np.isnan(mg) & ~np.isnan(g_ho.values)
                rmse[variant].append(float(np.sqrt(np.mean((mg[both] - g_ho.values[both]) ** 2))))
        wins += int(np.mean(rmse["M3"]) < np.mean(rmse["M1"]))
    assert wins >= 14, f"generating model won only {wins}/20"
    print(f"criterion 11 selection: generating model won {wins}/20 (gate >= 14)")


def test_c12_end_to_end_determinism(fixture_paths, tmp_path):
    """Two identical full fits on the bundled panel produce identical bytes."""
    stations, values = fixture_paths

    def run():
        cfg = RunConfig(
            seed=20240817,
            out_dir=str(tmp_path / "runs"),
            stations_csv=str(stations),
            values_csv=str(values),
            data_scale="data",
            model=ModelConfig(variant="M1", delta=0.577, phi=0.874, psi1=9.107, psi2=0.328),
            train=TrainSettings(K=100, epochs=2, batch_size=32),
            budgets=Budgets(
                bootstrap_B=4,
                select_folds=2,
                select_mc_sims=10,
                verify_pairs=100_000,
                chi_star_draws=10,
                curve_bootstrap=10,
            ),
        ).validate()
        _, run_dir = pipeline_fit(cfg)
        return run_dir

    first = run()
    second = run()
    assert second.name != first.name
    r1 = (first / "report.json").read_bytes()
    r2 = (second / "report.json").read_bytes()
    assert r1 == r2, "reports differ between identical runs"
    assert (first / "chi_grid.csv").read_bytes() == (second / "chi_grid.csv").read_bytes()
    print(f"criterion 12 determinism: byte-identical reports ({len(r1)} bytes)")
