"""Amortized estimation of the dependence parameters from chi grids.

The estimator follows the simulate-summarize-regress recipe: draw parameter
vectors theta = (delta, phi, psi1, psi2) uniformly from a box, simulate one
uniform-scale panel per draw on the target layout (censored at probability p
like observed data), summarize each panel by its chi grid, and train the
convolutional network to regress the box-scaled theta on the grid. At fit
time the observed grid goes through the same summarization and one forward
pass; uncertainty comes from a parametric bootstrap that re-simulates panels
at the fitted parameters and pushes each through the identical path.

NaN grid cells (empty bins) are imputed to zero on the way into the network,
identically during training and prediction; imputation counts are kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .chi import ChiGrid, GridConfig, chi_grid
from .data import PanelDataset
from .errors import ConfigError, DomainError, EstimationError, LayoutError, StmixError
from .margins import MarginalSpec, fit_gpd_mle, uniform_to_data
from .mixture import CopulaSpec, simulate_copula
from .network import ChiNetwork, NetworkConfig, TrainConfig, TrainResult, train_network
from .rng import derive_seed, substream

__all__ = [
    "ParamBox",
    "DEFAULT_BOX",
    "TrainingSet",
    "generate_training_set",
    "TrainedEstimator",
    "train_estimator",
    "estimate",
    "bootstrap",
    "BootstrapResult",
]

PARAM_NAMES = ("delta", "phi", "psi1", "psi2")


@dataclass(frozen=True)
class ParamBox:
    """Axis-aligned sampling box for (delta, phi, psi1, psi2)."""

    lows: tuple[float, float, float, float] = (0.0, 0.0, 4.0, 0.0)
    highs: tuple[float, float, float, float] = (1.0, 2.5, 16.0, 2.5)

    def __post_init__(self) -> None:
        if len(self.lows) != 4 or len(self.highs) != 4:
            raise ConfigError("box needs 4 lows and 4 highs")
        for lo, hi in zip(self.lows, self.highs):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"invalid box edge ({lo}, {hi})")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        lo = np.asarray(self.lows)
        hi = np.asarray(self.highs)
        return lo + (hi - lo) * rng.random((size, 4))

    def scale(self, theta: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lows)
        hi = np.asarray(self.highs)
        return (np.asarray(theta, dtype=float) - lo) / (hi - lo)

    def unscale(self, scaled: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lows)
        hi = np.asarray(self.highs)
        return lo + (hi - lo) * np.asarray(scaled, dtype=float)

    def contains(self, theta: np.ndarray) -> bool:
        s = self.scale(theta)
        return bool(np.all(s >= 0.0) and np.all(s <= 1.0))


DEFAULT_BOX = ParamBox()


def grid_to_input(grid_values: np.ndarray) -> tuple[np.ndarray, int]:
    """Impute NaN cells to 0; returns (input tensor, number imputed)."""
    values = np.asarray(grid_values, dtype=float)
    bad = np.isnan(values)
    out = np.where(bad, 0.0, values)
    return out, int(bad.sum())


@dataclass
class TrainingSet:
    """Simulated (grid, theta) pairs plus the geometry they were built on."""

    inputs: np.ndarray  # (K, L, m1, m2), NaN already imputed
    thetas: np.ndarray  # (K, 4) physical scale
    box: ParamBox
    variant: str
    nu: float
    p_censor: float
    n_years: int
    n_days: int
    coords: np.ndarray
    grid_config: GridConfig
    seed: int
    n_imputed: int = 0

    def save(self, path: str | Path) -> None:
        """Binary tensor file plus a JSON sidecar header."""
        path = Path(path)
        np.savez_compressed(path, inputs=self.inputs, thetas=self.thetas, coords=self.coords)
        header = {
            "format_version": 1,
            "box": {"lows": list(self.box.lows), "highs": list(self.box.highs)},
            "variant": self.variant,
            "nu": self.nu,
            "p_censor": self.p_censor,
            "n_years": self.n_years,
            "n_days": self.n_days,
            "grid": {
                "u_levels": list(self.grid_config.u_levels),
                "n_dist_bins": self.grid_config.n_dist_bins,
                "lags": list(self.grid_config.lags),
                "max_dist": self.grid_config.max_dist,
            },
            "seed": self.seed,
            "n_imputed": self.n_imputed,
        }
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(header, fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path: str | Path) -> "TrainingSet":
        path = Path(path)
        arrays = np.load(path if path.suffix == ".npz" else path.with_suffix(".npz"))
        with open(path.with_suffix(".json")) as fh:
            header = json.load(fh)
        if header.get("format_version") != 1:
            raise ConfigError("unsupported training-set format")
        g = header["grid"]
        return cls(
            inputs=arrays["inputs"],
            thetas=arrays["thetas"],
            box=ParamBox(lows=tuple(header["box"]["lows"]), highs=tuple(header["box"]["highs"])),
            variant=header["variant"],
            nu=header["nu"],
            p_censor=header["p_censor"],
            n_years=header["n_years"],
            n_days=header["n_days"],
            coords=arrays["coords"],
            grid_config=GridConfig(
                u_levels=tuple(g["u_levels"]),
                n_dist_bins=g["n_dist_bins"],
                lags=tuple(g["lags"]),
                max_dist=g["max_dist"],
            ),
            seed=header["seed"],
            n_imputed=header["n_imputed"],
        )


def _one_replicate(
    variant: str,
    nu: float,
    theta: np.ndarray,
    coords: np.ndarray,
    n_years: int,
    n_days: int,
    p_censor: float,
    grid_config: GridConfig,
    rep_seed: int,
) -> tuple[np.ndarray, int]:
    spec = CopulaSpec(
        variant=variant, delta=theta[0], phi=theta[1], psi1=theta[2], psi2=theta[3], nu=nu
    )
    panel = simulate_copula(spec, coords, n_years, n_days, rep_seed)
    if p_censor > 0.0:
        panel.values[...] = np.maximum(panel.values, p_censor)
    grid = chi_grid(panel, grid_config)
    return grid_to_input(grid.values)


def generate_training_set(
    variant: str,
    coords: np.ndarray,
    n_years: int,
    n_days: int,
    K: int,
    seed: int,
    *,
    box: ParamBox = DEFAULT_BOX,
    nu: float = 1.0,
    p_censor: float = 0.90,
    grid_config: GridConfig | None = None,
    n_jobs: int = 1,
) -> TrainingSet:
    """K simulated panels summarized to grids, with their theta targets.

    theta draws come from substream (seed, 0); panel k uses the derived seed
    (seed, 1, k), so a parallel run produces the same set as a sequential one.
    """
    K = int(K)
    if K < 1:
        raise ConfigError("K must be >= 1")
    if not (0.0 <= p_censor < 1.0):
        raise DomainError("p_censor must lie in [0, 1)")
    coords = np.asarray(coords, dtype=float)
    if grid_config is None:
        grid_config = GridConfig()
    thetas = box.sample(substream(seed, 0), K)
    # delta = 0.5 exactly would hit the non-generic branch; the box is open
    rep_seeds = [derive_seed(seed, 1, k) for k in range(K)]
    work = (
        delayed(_one_replicate)(
            variant, nu, thetas[k], coords, n_years, n_days, p_censor, grid_config, rep_seeds[k]
        )
        for k in range(K)
    )
    results = Parallel(n_jobs=n_jobs)(work)
    inputs = np.stack([r[0] for r in results], axis=0)
    n_imputed = int(sum(r[1] for r in results))
    return TrainingSet(
        inputs=inputs,
        thetas=thetas,
        box=box,
        variant=variant,
        nu=float(nu),
        p_censor=float(p_censor),
        n_years=int(n_years),
        n_days=int(n_days),
        coords=coords,
        grid_config=grid_config,
        seed=int(seed),
        n_imputed=n_imputed,
    )


@dataclass
class TrainedEstimator:
    """Network plus everything needed to reproduce its input summaries."""

    network: ChiNetwork
    box: ParamBox
    variant: str
    nu: float
    p_censor: float
    n_years: int
    n_days: int
    coords: np.ndarray
    grid_config: GridConfig
    train_result: TrainResult | None = None

    def save(self, path: str | Path) -> None:
        obj = {
            "format_version": 1,
            "network": json.loads(self.network.to_json()),
            "box": {"lows": list(self.box.lows), "highs": list(self.box.highs)},
            "variant": self.variant,
            "nu": self.nu,
            "p_censor": self.p_censor,
            "n_years": self.n_years,
            "n_days": self.n_days,
            "coords": [[float(c) for c in row] for row in self.coords],
            "grid": {
                "u_levels": list(self.grid_config.u_levels),
                "n_dist_bins": self.grid_config.n_dist_bins,
                "lags": list(self.grid_config.lags),
                "max_dist": self.grid_config.max_dist,
            },
        }
        with open(path, "w") as fh:
            json.dump(obj, fh, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "TrainedEstimator":
        with open(path) as fh:
            obj = json.load(fh)
        if obj.get("format_version") != 1:
            raise ConfigError("unsupported estimator format")
        g = obj["grid"]
        return cls(
            network=ChiNetwork.from_json(json.dumps(obj["network"])),
            box=ParamBox(lows=tuple(obj["box"]["lows"]), highs=tuple(obj["box"]["highs"])),
            variant=obj["variant"],
            nu=obj["nu"],
            p_censor=obj["p_censor"],
            n_years=obj["n_years"],
            n_days=obj["n_days"],
            coords=np.asarray(obj["coords"], dtype=float),
            grid_config=GridConfig(
                u_levels=tuple(g["u_levels"]),
                n_dist_bins=g["n_dist_bins"],
                lags=tuple(g["lags"]),
                max_dist=g["max_dist"],
            ),
        )


def train_estimator(
    ts: TrainingSet,
    *,
    network_config: NetworkConfig | None = None,
    train_config: TrainConfig | None = None,
) -> TrainedEstimator:
    """Fit the network to a training set; returns the packaged estimator."""
    L, m1, m2 = ts.inputs.shape[1:]
    if network_config is None:
        network_config = NetworkConfig(in_channels=L, height=m1, width=m2)
    if (network_config.in_channels, network_config.height, network_config.width) != (L, m1, m2):
        raise LayoutError(
            f"network expects {(network_config.in_channels, network_config.height, network_config.width)}, "
            f"training inputs are {(L, m1, m2)}"
        )
    if train_config is None:
        train_config = TrainConfig()
    net = ChiNetwork(network_config)
    result = train_network(net, ts.inputs, ts.box.scale(ts.thetas), train_config)
    return TrainedEstimator(
        network=net,
        box=ts.box,
        variant=ts.variant,
        nu=ts.nu,
        p_censor=ts.p_censor,
        n_years=ts.n_years,
        n_days=ts.n_days,
        coords=ts.coords,
        grid_config=ts.grid_config,
        train_result=result,
    )


def _check_grid_geometry(est: TrainedEstimator, grid: ChiGrid) -> None:
    cfg = est.grid_config
    if grid.values.shape != (len(cfg.u_levels), cfg.n_dist_bins, len(cfg.lags)):
        raise LayoutError(
            f"grid shape {grid.values.shape} does not match the estimator's "
            f"{(len(cfg.u_levels), cfg.n_dist_bins, len(cfg.lags))}"
        )
    if tuple(grid.u_levels) != tuple(cfg.u_levels) or tuple(grid.lags) != tuple(cfg.lags):
        raise LayoutError("grid levels/lags do not match the estimator's summary definition")


def estimate(est: TrainedEstimator, grid: ChiGrid) -> dict[str, float]:
    """One forward pass from a chi grid to physical parameters."""
    _check_grid_geometry(est, grid)
    x, _ = grid_to_input(grid.values)
    scaled = est.network.forward(x[None])[0]
    theta = est.box.unscale(scaled)
    return dict(zip(PARAM_NAMES, (float(v) for v in theta)))


def estimate_panel(est: TrainedEstimator, panel: PanelDataset) -> dict[str, float]:
    return estimate(est, chi_grid(panel, est.grid_config))


@dataclass
class BootstrapResult:
    """Parametric bootstrap draws and percentile intervals.

    draws has one row per successful replicate and six columns
    (delta, phi, psi1, psi2, sigma, xi); the marginal columns are NaN when no
    marginal model was attached. Intervals are equal-tail percentiles of the
    draws at the requested level.
    """

    point: dict[str, float]
    draws: np.ndarray
    intervals: dict[str, tuple[float, float]]
    level: float
    n_requested: int
    n_failed: int


def bootstrap(
    est: TrainedEstimator,
    theta_hat: dict[str, float],
    B: int,
    seed: int,
    *,
    marginal: MarginalSpec | None = None,
    thresholds: np.ndarray | None = None,
    level: float = 0.90,
    n_jobs: int = 1,
) -> BootstrapResult:
    """Parametric bootstrap at the fitted parameters.

    Each replicate simulates a panel at theta_hat on the training layout,
    re-estimates the dependence parameters through the same grid-and-forward
    path, and, when a marginal spec is given, maps the panel to data scale at
    the fitted marginal and refits the GPD tail. Replicates that fail are
    dropped; more than 5% failures is an error.
    """
    if B < 1:
        raise ConfigError("B must be >= 1")
    if not (0.0 < level < 1.0):
        raise DomainError("level must lie in (0, 1)")
    if marginal is not None and thresholds is None:
        raise ConfigError("marginal bootstrap needs per-site thresholds")
    theta = np.array([theta_hat[k] for k in PARAM_NAMES], dtype=float)
    if not est.box.contains(theta):
        raise EstimationError(f"theta_hat {theta_hat} lies outside the training box")

    def one(b: int):
        rep_seed = derive_seed(seed, 2, b)
        try:
            spec = CopulaSpec(
                variant=est.variant,
                delta=theta[0],
                phi=theta[1],
                psi1=theta[2],
                psi2=theta[3],
                nu=est.nu,
            )
            panel = simulate_copula(spec, est.coords, est.n_years, est.n_days, rep_seed)
            raw_u = panel.values.copy()
            if est.p_censor > 0.0:
                panel.values[...] = np.maximum(panel.values, est.p_censor)
            grid = chi_grid(panel, est.grid_config)
            x, _ = grid_to_input(grid.values)
            theta_b = est.box.unscale(est.network.forward(x[None])[0])
            sigma_b = xi_b = np.nan
            if marginal is not None:
                y = uniform_to_data(raw_u, np.broadcast_to(thresholds, raw_u.shape), marginal)
                exc = (y - thresholds).ravel()
                fit = fit_gpd_mle(exc[exc > 0.0])
                sigma_b, xi_b = fit.sigma, fit.xi
            return np.array([*theta_b, sigma_b, xi_b])
        except StmixError:
            return None

    rows = Parallel(n_jobs=n_jobs)(delayed(one)(b) for b in range(B))
    good = [r for r in rows if r is not None]
    n_failed = B - len(good)
    if len(good) < int(np.ceil(0.95 * B)):
        raise EstimationError(f"bootstrap failed {n_failed} of {B} replicates")
    draws = np.stack(good, axis=0)
    alpha = 1.0 - level
    names = list(PARAM_NAMES) + ["sigma", "xi"]
    intervals: dict[str, tuple[float, float]] = {}
    for ci, name in enumerate(names):
        col = draws[:, ci]
        if np.all(np.isnan(col)):
            continue
        lo, hi = np.quantile(col, [alpha / 2.0, 1.0 - alpha / 2.0])
        intervals[name] = (float(lo), float(hi))
    return BootstrapResult(
        point=dict(theta_hat),
        draws=draws,
        intervals=intervals,
        level=level,
        n_requested=B,
        n_failed=n_failed,
    )
