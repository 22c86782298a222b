"""Run configuration: one JSON file drives every pipeline.

The dataclasses mirror the JSON layout. validate() enforces the documented
budget minimums before any compute happens; pipelines trust a validated
config. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError

__all__ = ["ModelConfig", "MarginalConfig", "GridSettings", "TrainSettings", "Budgets", "StormSettings", "RunConfig"]

BUDGET_MINIMUMS = {
    "training_K": 100,
    "bootstrap_B": 4,
    "select_folds": 2,
    "select_mc_sims": 10,
    "verify_pairs": 100_000,
    "chi_star_draws": 10,
    "curve_bootstrap": 10,
}


@dataclass
class ModelConfig:
    variant: str = "M1"
    delta: float = 0.7
    phi: float = 1.0
    psi1: float = 9.0
    psi2: float = 0.3
    nu: float = 1.0
    temporal_family: str = "exponential"


@dataclass
class MarginalConfig:
    tau: float = 0.90
    sigma: float = 40.0
    xi: float = 0.1
    # mu(s) = c0 + c1*x + c2*y, for simulation/storm runs without a fit report
    threshold_coefficients: tuple[float, float, float] | None = None


@dataclass
class GridSettings:
    u_levels: tuple[float, ...] = (0.90, 0.95, 0.99)
    n_dist_bins: int = 8
    lags: tuple[int, ...] = tuple(range(8))
    max_dist: float | None = None


@dataclass
class TrainSettings:
    K: int = 30_000
    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-3
    val_fraction: float = 0.2
    box_lows: tuple[float, float, float, float] = (0.0, 0.0, 4.0, 0.0)
    box_highs: tuple[float, float, float, float] = (1.0, 2.5, 16.0, 2.5)
    weights_path: str | None = None  # reuse a trained network instead of training


@dataclass
class Budgets:
    bootstrap_B: int = 400
    select_folds: int = 50
    select_mc_sims: int = 500
    held_out_years: int | None = None  # None: N // 4
    verify_pairs: int = 1_000_000
    chi_star_draws: int = 1000
    curve_bootstrap: int = 200  # year-resample reps behind diagnostic bands


@dataclass
class StormSettings:
    spacing_km: float = 2.0
    margin_km: float = 2.0
    n_days: int = 4
    n_replicates: int = 1
    memory_budget_bytes: float = 2e9


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    stations_csv: str | None = None
    values_csv: str | None = None
    data_scale: str = "data"
    n_years: int = 20
    n_days: int = 92
    model: ModelConfig = field(default_factory=ModelConfig)
    marginal: MarginalConfig = field(default_factory=MarginalConfig)
    grid: GridSettings = field(default_factory=GridSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    budgets: Budgets = field(default_factory=Budgets)
    storm: StormSettings = field(default_factory=StormSettings)
    candidates: tuple[str, ...] = ("M1", "M3")
    candidate_weights: dict = field(default_factory=dict)  # variant -> weights path

    def validate(self) -> "RunConfig":
        checks = {
            "training_K": self.train.K,
            "bootstrap_B": self.budgets.bootstrap_B,
            "select_folds": self.budgets.select_folds,
            "select_mc_sims": self.budgets.select_mc_sims,
            "verify_pairs": self.budgets.verify_pairs,
            "chi_star_draws": self.budgets.chi_star_draws,
            "curve_bootstrap": self.budgets.curve_bootstrap,
        }
        for name, value in checks.items():
            if value < BUDGET_MINIMUMS[name]:
                raise ConfigError(f"{name}={value} is below the documented minimum {BUDGET_MINIMUMS[name]}")
        if self.data_scale not in ("data", "uniform"):
            raise ConfigError(f"data_scale must be 'data' or 'uniform', got {self.data_scale!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not (0.0 < self.marginal.tau < 1.0):
            raise ConfigError("marginal.tau must lie in (0, 1)")
        if self.n_years < 1 or self.n_days < 1:
            raise ConfigError("n_years and n_days must be >= 1")
        return self

    # ------------------------------------------------------------------ JSON

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2, default=_encode)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        return cls.from_json(path.read_text())

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config root must be a JSON object")
        sections = {
            "model": (ModelConfig, ()),
            "marginal": (MarginalConfig, ("threshold_coefficients",)),
            "grid": (GridSettings, ("u_levels", "lags")),
            "train": (TrainSettings, ("box_lows", "box_highs")),
            "budgets": (Budgets, ()),
            "storm": (StormSettings, ()),
        }
        kwargs: dict = {}
        for key, value in obj.items():
            if key in sections:
                klass, tuple_fields = sections[key]
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                allowed = set(klass.__dataclass_fields__)
                unknown = set(value) - allowed
                if unknown:
                    raise ConfigError(f"unknown keys in section {key!r}: {sorted(unknown)}")
                coerced = {
                    k: tuple(v) if k in tuple_fields and v is not None else v
                    for k, v in value.items()
                }
                kwargs[key] = klass(**coerced)
            elif key in cls.__dataclass_fields__:
                if key == "candidates" and value is not None:
                    value = tuple(value)
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(**kwargs)

    def digest(self) -> str:
        """Stable hash of the full configuration, used in reports."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _encode(value):
    raise TypeError(f"cannot serialize {value!r}")
