"""Simulation-trained parameter estimator: training sets, inference, bootstrap."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stmix.chi import GridConfig, chi_grid
from stmix.errors import ConfigError, EstimationError, LayoutError
from stmix.estimator import (
    DEFAULT_BOX,
    PARAM_NAMES,
    ParamBox,
    TrainedEstimator,
    TrainingSet,
    bootstrap,
    estimate,
    estimate_panel,
    generate_training_set,
    grid_to_input,
    train_estimator,
)
from stmix.margins import MarginalSpec
from stmix.mixture import CopulaSpec, simulate_copula
from stmix.network import NetworkConfig, TrainConfig

COORDS4 = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0], [9.0, 9.0]])
SMALL_GRID = GridConfig(u_levels=(0.8, 0.9), n_dist_bins=3, lags=(0, 1))


def tiny_training_set(K=6, seed=11, **kw):
    return generate_training_set(
        "M1", COORDS4, n_years=2, n_days=20, K=K, seed=seed, grid_config=SMALL_GRID, **kw
    )


def tiny_estimator(ts=None):
    if ts is None:
        ts = tiny_training_set()
    return train_estimator(
        ts,
        network_config=NetworkConfig(in_channels=2, height=3, width=2, conv_filters=2, dense_units=(6, 4)),
        train_config=TrainConfig(epochs=2, batch_size=4, seed=1),
    )


def test_box_scale_unscale_round_trip():
    theta = np.array([0.3, 1.2, 7.5, 0.4])
    s = DEFAULT_BOX.scale(theta)
    assert np.all((s >= 0) & (s <= 1))
    np.testing.assert_allclose(DEFAULT_BOX.unscale(s), theta, rtol=1e-14)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_box_unscale_always_inside(a, b, c, d):
    theta = DEFAULT_BOX.unscale(np.array([a, b, c, d]))
    assert DEFAULT_BOX.contains(theta)


def test_box_contains_rejects_outside():
    assert not DEFAULT_BOX.contains(np.array([1.2, 1.0, 8.0, 1.0]))
    assert not DEFAULT_BOX.contains(np.array([0.5, 1.0, 2.0, 1.0]))


def test_box_sampling_respects_bounds():
    box = ParamBox(lows=(0.2, 0.1, 5.0, 0.1), highs=(0.8, 2.0, 10.0, 1.0))
    draws = box.sample(np.random.default_rng(0), 500)
    assert draws.shape == (500, 4)
    assert np.all(draws >= np.array(box.lows)) and np.all(draws <= np.array(box.highs))


def test_box_validation():
    with pytest.raises(ConfigError):
        ParamBox(lows=(0.0, 0.0, 4.0, 2.5), highs=(1.0, 2.5, 16.0, 2.5))


def test_grid_to_input_imputes_nan():
    vals = np.array([[[0.5, np.nan], [np.nan, 0.2]]])
    out, n = grid_to_input(vals)
    assert n == 2
    np.testing.assert_array_equal(out, [[[0.5, 0.0], [0.0, 0.2]]])
    assert grid_to_input(np.zeros((2, 2, 2)))[1] == 0


def test_training_set_shapes_and_determinism():
    ts1 = tiny_training_set()
    ts2 = tiny_training_set()
    assert ts1.inputs.shape == (6, 2, 3, 2)
    assert ts1.thetas.shape == (6, 4)
    assert np.all(np.isfinite(ts1.inputs))
    np.testing.assert_array_equal(ts1.inputs, ts2.inputs)
    np.testing.assert_array_equal(ts1.thetas, ts2.thetas)


def test_training_set_parallel_matches_sequential():
    seq = tiny_training_set(K=4)
    par = tiny_training_set(K=4, n_jobs=2)
    np.testing.assert_array_equal(seq.inputs, par.inputs)
    np.testing.assert_array_equal(seq.thetas, par.thetas)


def test_training_set_thetas_in_box():
    ts = tiny_training_set()
    for row in ts.thetas:
        assert ts.box.contains(row)


def test_training_set_save_load(tmp_path):
    ts = tiny_training_set(K=3)
    path = tmp_path / "tset.npz"
    ts.save(path)
    back = TrainingSet.load(path)
    np.testing.assert_array_equal(back.inputs, ts.inputs)
    np.testing.assert_array_equal(back.thetas, ts.thetas)
    np.testing.assert_array_equal(back.coords, ts.coords)
    assert back.variant == "M1" and back.p_censor == ts.p_censor
    assert tuple(back.grid_config.u_levels) == (0.8, 0.9)


def test_train_estimator_infers_layout():
    ts = tiny_training_set(K=4)
    est = train_estimator(ts, train_config=TrainConfig(epochs=1, batch_size=2, seed=0))
    assert est.network.config.in_channels == 2
    assert (est.network.config.height, est.network.config.width) == (3, 2)
    assert est.train_result is not None and est.train_result.best_epoch >= 0


def test_train_estimator_rejects_mismatched_network():
    ts = tiny_training_set(K=4)
    with pytest.raises(LayoutError):
        train_estimator(ts, network_config=NetworkConfig(in_channels=5, height=3, width=2))


def test_estimate_returns_in_box_params():
    est = tiny_estimator()
    spec = CopulaSpec("M1", 0.6, 1.0, 8.0, 0.5)
    panel = simulate_copula(spec, COORDS4, 2, 20, seed=3)
    grid = chi_grid(panel, SMALL_GRID)
    theta = estimate(est, grid)
    assert set(theta) == set(PARAM_NAMES)
    assert est.box.contains(np.array([theta[k] for k in PARAM_NAMES]))
    assert theta == estimate_panel(est, panel)


def test_estimate_rejects_wrong_grid_geometry():
    est = tiny_estimator()
    spec = CopulaSpec("M1", 0.6, 1.0, 8.0, 0.5)
    panel = simulate_copula(spec, COORDS4, 2, 20, seed=3)
    with pytest.raises(LayoutError):
        estimate(est, chi_grid(panel, GridConfig(u_levels=(0.8, 0.9), n_dist_bins=4, lags=(0, 1))))
    with pytest.raises(LayoutError):
        estimate(est, chi_grid(panel, GridConfig(u_levels=(0.7, 0.9), n_dist_bins=3, lags=(0, 1))))


def test_estimator_save_load_round_trip(tmp_path):
    est = tiny_estimator()
    path = tmp_path / "est.json"
    est.save(path)
    back = TrainedEstimator.load(path)
    spec = CopulaSpec("M1", 0.4, 0.8, 9.0, 0.3)
    panel = simulate_copula(spec, COORDS4, 2, 20, seed=9)
    assert estimate_panel(back, panel) == estimate_panel(est, panel)
    assert back.variant == est.variant and back.nu == est.nu
    np.testing.assert_array_equal(back.coords, est.coords)


THETA_HAT = {"delta": 0.6, "phi": 1.0, "psi1": 8.0, "psi2": 0.5}


def test_bootstrap_shapes_and_determinism():
    est = tiny_estimator()
    r1 = bootstrap(est, THETA_HAT, B=5, seed=2)
    r2 = bootstrap(est, THETA_HAT, B=5, seed=2)
    assert r1.draws.shape == (5, 6)
    assert r1.n_requested == 5 and r1.n_failed == 0
    np.testing.assert_array_equal(r1.draws, r2.draws)
    # no marginal model attached: sigma/xi columns stay NaN
    assert np.all(np.isnan(r1.draws[:, 4:]))
    assert np.all(np.isfinite(r1.draws[:, :4]))
    for name in PARAM_NAMES:
        lo, hi = r1.intervals[name]
        assert lo <= hi
    assert "sigma" not in r1.intervals


def test_bootstrap_parallel_matches_sequential():
    est = tiny_estimator()
    seq = bootstrap(est, THETA_HAT, B=4, seed=5)
    par = bootstrap(est, THETA_HAT, B=4, seed=5, n_jobs=2)
    np.testing.assert_array_equal(seq.draws, par.draws)


def test_bootstrap_intervals_bracket_draws():
    est = tiny_estimator()
    res = bootstrap(est, THETA_HAT, B=8, seed=7, level=0.5)
    for j, name in enumerate(PARAM_NAMES):
        lo, hi = res.intervals[name]
        col = res.draws[:, j]
        np.testing.assert_allclose(lo, np.percentile(col, 25.0), rtol=1e-12)
        np.testing.assert_allclose(hi, np.percentile(col, 75.0), rtol=1e-12)


def test_bootstrap_rejects_theta_outside_box():
    est = tiny_estimator()
    with pytest.raises(EstimationError):
        bootstrap(est, {"delta": 0.6, "phi": 1.0, "psi1": 2.0, "psi2": 0.5}, B=2, seed=0)


def test_bootstrap_marginal_path():
    ts = tiny_training_set(K=6, p_censor=0.0)
    est = tiny_estimator(ts)
    marginal = MarginalSpec(p=0.9, sigma=30.0, xi=0.1)
    thresholds = np.full(4, 50.0)
    # GPD refit needs enough exceedances per replicate: 2y x 20d x 4 sites
    # at p=0.9 gives ~16 per replicate, so widen with more years
    est.n_years = 8
    res = bootstrap(est, THETA_HAT, B=4, seed=3, marginal=marginal, thresholds=thresholds)
    assert np.all(np.isfinite(res.draws))
    assert "sigma" in res.intervals and "xi" in res.intervals
    lo, hi = res.intervals["sigma"]
    assert 0.0 < lo <= hi


def test_bootstrap_marginal_requires_thresholds():
    est = tiny_estimator()
    with pytest.raises(ConfigError):
        bootstrap(est, THETA_HAT, B=2, seed=0, marginal=MarginalSpec(0.9, 30.0, 0.1))
