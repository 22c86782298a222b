"""End-to-end workflows behind the command line.

Every pipeline takes a validated RunConfig, reads/writes only inside a fresh
versioned run directory (out_dir/run_NNNN), and is deterministic given
(config, seed): re-running appends a new run directory whose report bytes
match the previous one. Reports avoid timestamps and absolute paths for that
reason.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np

from .chi import GridConfig, chi_grid, chi_star, rmse_chi_star, same_site_lag_chi, verify_dependence_class, year_block_bootstrap
from .config import RunConfig
from .data import PanelDataset, export_panel, ingest
from .errors import ConfigError, DataError, EstimationError, LayoutError
from .estimator import (
    PARAM_NAMES,
    ParamBox,
    TrainedEstimator,
    bootstrap,
    estimate,
    generate_training_set,
    train_estimator,
)
from .kernels import pairwise_distances
from .margins import MarginalSpec, fit_gpd_mle, fit_threshold_qr, uniform_to_data
from .mixture import CopulaSpec, simulate_copula
from .network import NetworkConfig, TrainConfig
from .rng import derive_seed

__all__ = [
    "next_run_dir",
    "pipeline_simulate",
    "pipeline_train",
    "pipeline_fit",
    "pipeline_bootstrap",
    "pipeline_model_select",
    "pipeline_storm",
    "pipeline_verify_classes",
    "pipeline_diagnose",
]


def next_run_dir(out_dir: str | Path) -> Path:
    """Create and return out_dir/run_NNNN with the next free index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = 1
    while (out_dir / f"run_{n:04d}").exists():
        n += 1
    run_dir = out_dir / f"run_{n:04d}"
    run_dir.mkdir()
    return run_dir


def _grid_config(cfg: RunConfig) -> GridConfig:
    g = cfg.grid
    return GridConfig(
        u_levels=tuple(g.u_levels),
        n_dist_bins=int(g.n_dist_bins),
        lags=tuple(int(k) for k in g.lags),
        max_dist=g.max_dist,
    )


def _copula_spec(cfg: RunConfig) -> CopulaSpec:
    m = cfg.model
    return CopulaSpec(
        variant=m.variant,
        delta=m.delta,
        phi=m.phi,
        psi1=m.psi1,
        psi2=m.psi2,
        nu=m.nu,
        temporal_family=m.temporal_family,
    )


def _load_panel(cfg: RunConfig) -> PanelDataset:
    if cfg.stations_csv is None or cfg.values_csv is None:
        raise ConfigError("this pipeline needs stations_csv and values_csv in the config")
    return ingest(cfg.stations_csv, cfg.values_csv, scale=cfg.data_scale)


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _train_or_load(
    cfg: RunConfig,
    panel_coords: np.ndarray,
    n_years: int,
    n_days: int,
    variant: str,
    p_censor: float,
    weights_path: str | None,
    run_dir: Path | None,
    label: str,
    grid_cfg: GridConfig | None = None,
) -> TrainedEstimator:
    if weights_path:
        est = TrainedEstimator.load(weights_path)
        if est.variant != variant:
            raise ConfigError(f"weights at {weights_path} are for {est.variant}, expected {variant}")
        if est.coords.shape != panel_coords.shape or not np.allclose(est.coords, panel_coords):
            raise LayoutError("trained estimator layout does not match the data sites")
        if (est.n_years, est.n_days) != (n_years, n_days):
            raise LayoutError(
                f"trained estimator expects {est.n_years}x{est.n_days} years x days, data are {n_years}x{n_days}"
            )
        return est
    t = cfg.train
    ts = generate_training_set(
        variant,
        panel_coords,
        n_years,
        n_days,
        t.K,
        derive_seed(cfg.seed, 3),
        box=ParamBox(lows=tuple(t.box_lows), highs=tuple(t.box_highs)),
        nu=cfg.model.nu,
        p_censor=p_censor,
        grid_config=grid_cfg if grid_cfg is not None else _grid_config(cfg),
        n_jobs=cfg.threads,
    )
    est = train_estimator(
        ts,
        train_config=TrainConfig(
            epochs=t.epochs,
            batch_size=t.batch_size,
            learning_rate=t.learning_rate,
            val_fraction=t.val_fraction,
            seed=derive_seed(cfg.seed, 4),
        ),
    )
    if run_dir is not None:
        est.save(run_dir / f"weights_{label}.json")
        est.train_result.history_csv(run_dir / f"loss_curves_{label}.csv")
    return est


# ---------------------------------------------------------------------------


def pipeline_simulate(cfg: RunConfig, scale: str = "uniform") -> Path:
    """Simulate one panel from the configured model and write its CSV pair.

    scale="data" additionally applies the marginal layer; it needs
    marginal.threshold_coefficients in the config for the mu(s) plane.
    """
    if cfg.stations_csv is None:
        raise ConfigError("simulate needs stations_csv for the site layout")
    stations = ingest_stations(cfg.stations_csv)
    run_dir = next_run_dir(cfg.out_dir)
    spec = _copula_spec(cfg)
    panel = simulate_copula(
        spec,
        stations["coords"],
        cfg.n_years,
        cfg.n_days,
        derive_seed(cfg.seed, 1),
        site_ids=stations["site_ids"],
    )
    if scale == "data":
        coefs = cfg.marginal.threshold_coefficients
        if coefs is None:
            raise ConfigError("data-scale simulation needs marginal.threshold_coefficients")
        mu = coefs[0] + stations["coords"] @ np.asarray(coefs[1:], dtype=float)
        m = MarginalSpec(p=cfg.marginal.tau, sigma=cfg.marginal.sigma, xi=cfg.marginal.xi)
        vals = uniform_to_data(panel.values, np.broadcast_to(mu, panel.values.shape), m)
        panel = PanelDataset(
            site_ids=panel.site_ids,
            coords=panel.coords,
            values=vals,
            mask=panel.mask,
            scale="data",
            year_labels=panel.year_labels,
        )
    export_panel(panel, run_dir / "stations.csv", run_dir / "values.csv")
    return run_dir


def ingest_stations(stations_csv: str | Path) -> dict:
    import pandas as pd

    stations = pd.read_csv(stations_csv, dtype={"site_id": str})
    for col in ("site_id", "x_km", "y_km"):
        if col not in stations.columns:
            raise DataError(f"{stations_csv} is missing column {col!r}")
    return {
        "site_ids": list(stations["site_id"]),
        "coords": stations[["x_km", "y_km"]].to_numpy(dtype=float),
    }


def pipeline_train(cfg: RunConfig) -> tuple[dict, Path]:
    """Simulate a training set and fit the parameter network, saving weights.

    The layout comes from stations_csv and the panel dimensions from the
    config, so a later fit on matching data can point weights_path here and
    skip the expensive stage.
    """
    run_dir = next_run_dir(cfg.out_dir)
    stations = ingest_stations(cfg.stations_csv) if cfg.stations_csv else None
    if stations is None:
        raise ConfigError("train needs stations_csv for the site layout")
    p_censor = cfg.marginal.tau if cfg.data_scale == "data" else 0.0
    est = _train_or_load(
        cfg,
        stations["coords"],
        cfg.n_years,
        cfg.n_days,
        cfg.model.variant,
        p_censor,
        None,
        run_dir,
        cfg.model.variant,
    )
    tr = est.train_result
    result = {
        "variant": cfg.model.variant,
        "K": cfg.train.K,
        "epochs": cfg.train.epochs,
        "best_epoch": tr.best_epoch,
        "best_val_mae": tr.best_val_mae,
        "weights": f"weights_{cfg.model.variant}.json",
        "config_digest": cfg.digest(),
    }
    _write_json(run_dir / "train.json", result)
    return result, run_dir


def pipeline_bootstrap(cfg: RunConfig, report_path: str | Path) -> tuple[dict, Path]:
    """Re-run the parametric bootstrap around a reported point estimate.

    Needs train.weights_path so replicate grids feed the same network that
    produced the point estimate.
    """
    run_dir = next_run_dir(cfg.out_dir)
    if cfg.train.weights_path is None:
        raise ConfigError("bootstrap needs train.weights_path")
    with open(report_path) as fh:
        report = json.load(fh)
    theta = {k: report["dependence"][k]["estimate"] for k in PARAM_NAMES}
    est = TrainedEstimator.load(cfg.train.weights_path)
    marginal = None
    thresholds = None
    if report.get("marginal"):
        m = report["marginal"]
        marginal = MarginalSpec(
            p=m["threshold"]["tau"], sigma=m["sigma"]["estimate"], xi=m["xi"]["estimate"]
        )
        coefs = np.asarray(m["threshold"]["coefficients"], dtype=float)
        thresholds = coefs[0] + est.coords @ coefs[1:]
    boot = bootstrap(
        est,
        theta,
        cfg.budgets.bootstrap_B,
        derive_seed(cfg.seed, 5),
        marginal=marginal,
        thresholds=thresholds,
        n_jobs=cfg.threads,
    )
    with open(run_dir / "bootstrap_draws.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(PARAM_NAMES) + ["sigma", "xi"])
        for row in boot.draws:
            w.writerow([repr(float(v)) for v in row])
    result = {
        "point": boot.point,
        "intervals": {k: list(v) for k, v in boot.intervals.items()},
        "level": boot.level,
        "n_requested": boot.n_requested,
        "n_failed": boot.n_failed,
        "config_digest": cfg.digest(),
    }
    _write_json(run_dir / "bootstrap.json", result)
    return result, run_dir


def pipeline_fit(cfg: RunConfig) -> tuple[dict, Path]:
    """Threshold regression, GPD tail, chi grid, network estimate, bootstrap.

    Returns (report, run_dir). Data already on the uniform scale skip the
    marginal layer entirely (p = 0, no censoring).
    """
    run_dir = next_run_dir(cfg.out_dir)
    panel = _load_panel(cfg)
    grid_cfg = _grid_config(cfg)

    marginal = None
    thresholds = None
    threshold_block = None
    p_censor = 0.0
    work_panel = panel
    if panel.scale == "data":
        thr = fit_threshold_qr(panel, cfg.marginal.tau)
        thresholds = thr.mu_site
        exc = panel.values - thresholds[None, None, :]
        exc = exc[(~panel.mask) & (exc > 0.0)]
        gpd = fit_gpd_mle(exc)
        marginal = MarginalSpec(p=cfg.marginal.tau, sigma=gpd.sigma, xi=gpd.xi)
        p_censor = cfg.marginal.tau
        threshold_block = {
            "tau": cfg.marginal.tau,
            "coefficients": [float(c) for c in thr.coefficients],
            "pinball_loss": thr.loss,
            "n_exceedances": gpd.n_exceedances,
            "gpd": {
                "sigma": gpd.sigma,
                "xi": gpd.xi,
                "se_sigma": gpd.se_sigma,
                "se_xi": gpd.se_xi,
                "se_note": "independence likelihood; bootstrap intervals are authoritative",
                "converged": gpd.converged,
            },
        }
        with open(run_dir / "thresholds.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site_id", "mu"])
            for sid, mu in zip(panel.site_ids, thresholds):
                w.writerow([sid, repr(float(mu))])

    grid = chi_grid(work_panel, grid_cfg)
    grid.to_csv(run_dir / "chi_grid.csv")
    (run_dir / "chi_grid.json").write_text(grid.to_json())

    est = _train_or_load(
        cfg,
        panel.coords,
        panel.n_years,
        panel.n_days,
        cfg.model.variant,
        p_censor,
        cfg.train.weights_path,
        run_dir,
        cfg.model.variant,
    )
    theta = estimate(est, grid)
    boot = bootstrap(
        est,
        theta,
        cfg.budgets.bootstrap_B,
        derive_seed(cfg.seed, 5),
        marginal=marginal,
        thresholds=thresholds,
        n_jobs=cfg.threads,
    )
    with open(run_dir / "bootstrap_draws.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(PARAM_NAMES) + ["sigma", "xi"])
        for row in boot.draws:
            w.writerow([repr(float(v)) for v in row])

    dependence = {}
    for name in PARAM_NAMES:
        block = {"estimate": theta[name]}
        if name in boot.intervals:
            block["interval90"] = list(boot.intervals[name])
        dependence[name] = block
    marginal_block = None
    if marginal is not None:
        marginal_block = {
            "sigma": {"estimate": marginal.sigma, "interval90": list(boot.intervals.get("sigma", (float("nan"),) * 2))},
            "xi": {"estimate": marginal.xi, "interval90": list(boot.intervals.get("xi", (float("nan"),) * 2))},
            "threshold": threshold_block,
        }
    report = {
        "model": cfg.model.variant,
        "dependence": dependence,
        "marginal": marginal_block,
        "counts": {
            "n_years": panel.n_years,
            "n_days": panel.n_days,
            "n_sites": panel.n_sites,
            "chi_cells_clipped": grid.n_clipped,
            "bootstrap_requested": boot.n_requested,
            "bootstrap_failed": boot.n_failed,
        },
        "interval_level": boot.level,
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
    }
    _write_json(run_dir / "report.json", report)
    return report, run_dir


def pipeline_model_select(cfg: RunConfig) -> tuple[dict, Path]:
    """Held-out-years model comparison by chi-grid RMSE.

    Each fold holds out `held_out_years` (default N // 4) years, estimates
    every candidate from the remaining years' grid, Monte-Carlo-estimates each
    candidate's held-out-size grid, and scores RMSE against the held-out
    empirical grid over cells defined on both sides.
    """
    run_dir = next_run_dir(cfg.out_dir)
    panel = _load_panel(cfg)
    grid_cfg = _grid_config(cfg)
    if grid_cfg.max_dist is None:
        # freeze the bin geometry so full-panel and year-subset grids align
        grid_cfg = GridConfig(
            u_levels=grid_cfg.u_levels,
            n_dist_bins=grid_cfg.n_dist_bins,
            lags=grid_cfg.lags,
            max_dist=float(pairwise_distances(panel.coords).max()) / 2.0,
        )
    N = panel.n_years
    h = cfg.budgets.held_out_years or max(1, N // 4)
    if h >= N:
        raise ConfigError(f"held_out_years={h} must be smaller than N={N}")
    p_censor = cfg.marginal.tau if panel.scale == "data" else 0.0

    estimators: dict[str, TrainedEstimator] = {}
    for variant in cfg.candidates:
        estimators[variant] = _train_or_load(
            cfg,
            panel.coords,
            panel.n_years,
            panel.n_days,
            variant,
            p_censor,
            cfg.candidate_weights.get(variant),
            run_dir,
            variant,
            grid_cfg=grid_cfg,
        )

    folds = cfg.budgets.select_folds
    sims = cfg.budgets.select_mc_sims
    rmse = {v: [] for v in cfg.candidates}
    fold_rows = []
    for f in range(folds):
        rng = np.random.default_rng(derive_seed(cfg.seed, 50, f))
        held = np.sort(rng.choice(N, size=h, replace=False))
        keep = np.setdiff1d(np.arange(N), held)
        grid_train = chi_grid(panel.subset_years(keep), grid_cfg)
        grid_held = chi_grid(panel.subset_years(held), grid_cfg)
        for ci, variant in enumerate(cfg.candidates):
            est = estimators[variant]
            theta = estimate(est, grid_train)
            spec = CopulaSpec(
                variant=variant,
                delta=theta["delta"],
                phi=theta["phi"],
                psi1=theta["psi1"],
                psi2=theta["psi2"],
                nu=cfg.model.nu,
            )
            acc = []
            for s in range(sims):
                sim = simulate_copula(
                    spec, panel.coords, h, panel.n_days, derive_seed(cfg.seed, 51, f, ci, s)
                )
                if p_censor > 0.0:
                    sim.values[...] = np.maximum(sim.values, p_censor)
                acc.append(chi_grid(sim, grid_cfg).values)
            with warnings.catch_warnings():
                # cells empty in every simulation stay NaN and drop out below
                warnings.simplefilter("ignore", RuntimeWarning)
                model_grid = np.nanmean(np.stack(acc, axis=0), axis=0)
            both = ~np.isnan(model_grid) & ~np.isnan(grid_held.values)
            if not both.any():
                raise EstimationError("no overlapping grid cells between model and held-out data")
            err = float(np.sqrt(np.mean((model_grid[both] - grid_held.values[both]) ** 2)))
            rmse[variant].append(err)
            fold_rows.append({"fold": f, "model": variant, "rmse": err, "theta": theta})

    summary = {v: float(np.mean(rmse[v])) for v in cfg.candidates}
    winner = min(summary, key=summary.get)
    result = {
        "candidates": list(cfg.candidates),
        "mean_rmse": summary,
        "winner": winner,
        "folds": folds,
        "mc_sims": sims,
        "held_out_years": h,
        "config_digest": cfg.digest(),
    }
    _write_json(run_dir / "select.json", result)
    with open(run_dir / "select.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "model", "rmse"])
        for row in fold_rows:
            w.writerow([row["fold"], row["model"], repr(row["rmse"])])
    return result, run_dir


def pipeline_storm(cfg: RunConfig, report_path: str | Path | None = None) -> tuple[dict, Path]:
    """Simulate short storm episodes on a dense lattice and write event rows.

    Dependence parameters come from a fit report when given, otherwise from
    the config model. Thresholds on lattice cells use the fitted (or
    configured) mu(s) plane; values below threshold are censored at mu, and
    the exceeds flag marks strict exceedances.
    """
    run_dir = next_run_dir(cfg.out_dir)
    model = _copula_spec(cfg)
    sigma, xi = cfg.marginal.sigma, cfg.marginal.xi
    tau = cfg.marginal.tau
    coefs = cfg.marginal.threshold_coefficients
    if report_path is not None:
        with open(report_path) as fh:
            report = json.load(fh)
        dep = {k: report["dependence"][k]["estimate"] for k in PARAM_NAMES}
        model = model.with_dependence(dep["delta"], dep["phi"], dep["psi1"], dep["psi2"])
        if report.get("marginal"):
            sigma = report["marginal"]["sigma"]["estimate"]
            xi = report["marginal"]["xi"]["estimate"]
            tau = report["marginal"]["threshold"]["tau"]
            coefs = report["marginal"]["threshold"]["coefficients"]
    if coefs is None:
        raise ConfigError("storm needs a threshold plane: fit report or marginal.threshold_coefficients")
    marginal = MarginalSpec(p=tau, sigma=sigma, xi=xi)

    if cfg.stations_csv is not None:
        coords_obs = ingest_stations(cfg.stations_csv)["coords"]
    else:
        raise ConfigError("storm needs stations_csv to anchor the lattice")
    s = cfg.storm
    x_lo, y_lo = coords_obs.min(axis=0) - s.margin_km
    x_hi, y_hi = coords_obs.max(axis=0) + s.margin_km
    xs = np.arange(x_lo, x_hi + s.spacing_km / 2, s.spacing_km)
    ys = np.arange(y_lo, y_hi + s.spacing_km / 2, s.spacing_km)
    lattice = np.array([(x, y) for x in xs for y in ys])
    coords = np.vstack([coords_obs, lattice])
    n_total = coords.shape[0]
    need = 8.0 * (n_total**2 + n_total * s.n_days) * 3
    if need > s.memory_budget_bytes:
        raise LayoutError(
            f"lattice of {n_total} points needs ~{need:.2e} bytes, over the budget {s.memory_budget_bytes:.2e}"
        )
    mu = coefs[0] + coords @ np.asarray(coefs[1:], dtype=float)

    kinds = ["station"] * coords_obs.shape[0] + ["lattice"] * lattice.shape[0]
    frac_rows = []
    with open(run_dir / "storm.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "kind", "x_km", "y_km", "day", "value", "exceeds"])
        for rep in range(s.n_replicates):
            panel = simulate_copula(model, coords, 1, s.n_days, derive_seed(cfg.seed, 9, rep))
            u = panel.values[0]  # (T, n)
            y = uniform_to_data(u, np.broadcast_to(mu, u.shape), marginal)
            exceeds = y > mu[None, :]
            for day in range(s.n_days):
                for i in range(n_total):
                    w.writerow(
                        [
                            rep,
                            kinds[i],
                            repr(float(coords[i, 0])),
                            repr(float(coords[i, 1])),
                            day + 1,
                            repr(float(y[day, i])),
                            int(exceeds[day, i]),
                        ]
                    )
                lat = exceeds[day, coords_obs.shape[0] :]
                frac_rows.append((rep, day + 1, float(lat.mean())))
    with open(run_dir / "storm_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "day", "lattice_fraction_exceeding"])
        for row in frac_rows:
            w.writerow([row[0], row[1], repr(row[2])])
    result = {
        "n_lattice": int(lattice.shape[0]),
        "n_stations": int(coords_obs.shape[0]),
        "n_days": s.n_days,
        "n_replicates": s.n_replicates,
        "censoring_fraction": float(np.mean([r[2] for r in frac_rows])),
    }
    _write_json(run_dir / "storm.json", result)
    return result, run_dir


def pipeline_verify_classes(cfg: RunConfig) -> tuple[dict, Path]:
    """Monte Carlo check that simulated tails match the classification table."""
    run_dir = next_run_dir(cfg.out_dir)
    spec = _copula_spec(cfg)
    if cfg.stations_csv is not None:
        coords = ingest_stations(cfg.stations_csv)["coords"]
        d = pairwise_distances(coords)
        distance = float(d[d > 0].min()) if (d > 0).any() else spec.psi1
    else:
        distance = spec.psi1
    rows = []
    for mi, mode in enumerate(("space", "time", "space_time")):
        rep = verify_dependence_class(
            spec,
            mode,
            distance=distance,
            lag=1.0,
            n_pairs=cfg.budgets.verify_pairs,
            seed=derive_seed(cfg.seed, 8, mi),
        )
        rows.append(
            {
                "mode": mode,
                "distance": rep.distance,
                "lag": rep.lag,
                "chi": [float(c) for c in rep.chi],
                "se": [float(c) for c in rep.se],
                "u_levels": list(rep.u_levels),
                "eta_slope": rep.eta_slope,
                "verdict": rep.verdict,
                "expected": rep.expected,
                "match": rep.match,
            }
        )
    result = {
        "variant": spec.variant,
        "delta": spec.delta,
        "modes": rows,
        "all_match": all(r["match"] for r in rows),
        "n_pairs": cfg.budgets.verify_pairs,
        "config_digest": cfg.digest(),
    }
    _write_json(run_dir / "verify_classes.json", result)
    return result, run_dir


def pipeline_diagnose(cfg: RunConfig, report_path: str | Path | None = None) -> tuple[dict, Path]:
    """Site-wise GPD table, chi curves with year-block bands, optional
    storm-propagation RMSE against a fitted model."""
    run_dir = next_run_dir(cfg.out_dir)
    panel = _load_panel(cfg)
    grid_cfg = _grid_config(cfg)
    summary: dict = {"n_sites": panel.n_sites, "config_digest": cfg.digest()}

    if panel.scale == "data":
        thr = fit_threshold_qr(panel, cfg.marginal.tau)
        with open(run_dir / "site_gpd.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site_id", "n_exceedances", "sigma", "se_sigma", "sigma_lo95", "sigma_hi95", "xi", "se_xi", "xi_lo95", "xi_hi95"])
            for i, sid in enumerate(panel.site_ids):
                vals = panel.values[:, :, i][~panel.mask[:, :, i]]
                exc = vals[vals > thr.mu_site[i]] - thr.mu_site[i]
                if exc.size < 30:
                    w.writerow([sid, exc.size] + [""] * 8)
                    continue
                fit = fit_gpd_mle(exc)
                w.writerow(
                    [
                        sid,
                        fit.n_exceedances,
                        repr(fit.sigma),
                        repr(fit.se_sigma),
                        repr(fit.sigma - 1.96 * fit.se_sigma),
                        repr(fit.sigma + 1.96 * fit.se_sigma),
                        repr(fit.xi),
                        repr(fit.se_xi),
                        repr(fit.xi - 1.96 * fit.se_xi),
                        repr(fit.xi + 1.96 * fit.se_xi),
                    ]
                )
        summary["site_gpd"] = "site_gpd.csv"

    grid = chi_grid(panel, grid_cfg)
    grid.to_csv(run_dir / "chi_grid.csv")
    (run_dir / "chi_grid.json").write_text(grid.to_json())

    # distance curve (lag 0 column) and same-site lag curve with bootstrap bands
    lags_pos = tuple(k for k in grid_cfg.lags if k >= 1) or (1,)
    B = cfg.budgets.curve_bootstrap

    def dist_stat(p: PanelDataset) -> np.ndarray:
        return chi_grid(p, grid_cfg).values[:, :, 0]

    def lag_stat(p: PanelDataset) -> np.ndarray:
        return same_site_lag_chi(p, grid_cfg.u_levels, lags_pos)

    dist_curve = dist_stat(panel)
    lag_curve = lag_stat(panel)
    dist_bands = year_block_bootstrap(panel, dist_stat, B, derive_seed(cfg.seed, 12))
    lag_bands = year_block_bootstrap(panel, lag_stat, B, derive_seed(cfg.seed, 13))
    with open(run_dir / "chi_curves.csv", "w", newline="") as fh, warnings.catch_warnings():
        # bands over cells that are empty in every resample are NaN by design
        warnings.simplefilter("ignore", RuntimeWarning)
        w = csv.writer(fh)
        w.writerow(["kind", "u", "x", "chi", "lo95", "hi95"])
        centers = 0.5 * (grid.dist_edges[:-1] + grid.dist_edges[1:])
        for li, u in enumerate(grid_cfg.u_levels):
            for bi, x in enumerate(centers):
                lo, hi = np.nanpercentile(dist_bands[:, li, bi], [2.5, 97.5])
                v = dist_curve[li, bi]
                w.writerow(["distance", repr(float(u)), repr(float(x)), "" if np.isnan(v) else repr(float(v)), repr(float(lo)), repr(float(hi))])
            for ki, lag in enumerate(lags_pos):
                lo, hi = np.nanpercentile(lag_bands[:, li, ki], [2.5, 97.5])
                v = lag_curve[li, ki]
                w.writerow(["lag", repr(float(u)), repr(float(lag)), "" if np.isnan(v) else repr(float(v)), repr(float(lo)), repr(float(hi))])

    if report_path is not None:
        with open(report_path) as fh:
            report = json.load(fh)
        dep = {k: report["dependence"][k]["estimate"] for k in PARAM_NAMES}
        spec = _copula_spec(cfg).with_dependence(dep["delta"], dep["phi"], dep["psi1"], dep["psi2"])
        draws = cfg.budgets.chi_star_draws
        combos = [(k, u) for k in (0, 1, 2) for u in (0.90, 0.95)]
        table = []
        emp = {cu: chi_star(panel, cu[0], cu[1]) for cu in combos}
        sim_stars = {cu: [] for cu in combos}
        for b in range(draws):
            sim = simulate_copula(
                spec, panel.coords, panel.n_years, panel.n_days, derive_seed(cfg.seed, 14, b)
            )
            for cu in combos:
                sim_stars[cu].append(chi_star(sim, cu[0], cu[1]))
        for cu in combos:
            table.append(
                {
                    "lag": cu[0],
                    "u": cu[1],
                    "rmse": rmse_chi_star(emp[cu], np.stack(sim_stars[cu], axis=0)),
                }
            )
        with open(run_dir / "chi_star_rmse.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "u", "rmse"])
            for row in table:
                w.writerow([row["lag"], repr(row["u"]), repr(row["rmse"])])
        summary["chi_star_rmse"] = table

    _write_json(run_dir / "diagnose.json", summary)
    return summary, run_dir
