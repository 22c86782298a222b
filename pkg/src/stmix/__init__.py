"""Simulation and inference for spatio-temporal extremes.

The dependence model multiplies a shared heavy-tailed scale process with a
weakly dependent spatio-temporal field; one mixing weight moves the result
between asymptotic dependence and independence separately in space and time.
Estimation summarizes panels of daily maxima into tail-correlation grids and
inverts them with a small convolutional network trained on simulations.
"""

from .chi import (
    ChiGrid,
    GridConfig,
    chi_grid,
    chi_star,
    empirical_chi_pair,
    rmse_chi_star,
    verify_dependence_class,
    year_block_bootstrap,
)
from .config import Budgets, MarginalConfig, ModelConfig, RunConfig
from .data import PanelDataset, export_panel, ingest
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    EstimationError,
    LayoutError,
    NumericalError,
    PrecisionError,
    StmixError,
)
from .estimator import (
    BootstrapResult,
    ParamBox,
    TrainedEstimator,
    TrainingSet,
    bootstrap,
    estimate,
    estimate_panel,
    generate_training_set,
    train_estimator,
)
from .fields import FieldSpec, simulate_gaussian, simulate_student_t
from .kernels import SeparableSTKernel, SpatialKernel, TemporalKernel, spatial_corr, temporal_corr
from .margins import (
    GPDFit,
    MarginalSpec,
    ThresholdFit,
    data_to_uniform,
    fit_gpd_mle,
    fit_threshold_qr,
    quantile_regression,
    uniform_to_data,
)
from .mixture import (
    VARIANTS,
    CopulaSpec,
    classify_dependence,
    marginal_cdf,
    marginal_quantile,
    simulate_copula,
)
from .network import ChiNetwork, NetworkConfig, TrainConfig, gradient_check, train_network
from .rng import derive_seed, substream

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Budgets",
    "BootstrapResult",
    "ChiGrid",
    "ChiNetwork",
    "ConfigError",
    "CopulaSpec",
    "DataError",
    "DomainError",
    "EstimationError",
    "FieldSpec",
    "GPDFit",
    "GridConfig",
    "LayoutError",
    "MarginalConfig",
    "MarginalSpec",
    "ModelConfig",
    "NetworkConfig",
    "NumericalError",
    "PanelDataset",
    "ParamBox",
    "PrecisionError",
    "RunConfig",
    "SeparableSTKernel",
    "SpatialKernel",
    "StmixError",
    "TemporalKernel",
    "ThresholdFit",
    "TrainConfig",
    "TrainedEstimator",
    "TrainingSet",
    "VARIANTS",
    "bootstrap",
    "chi_grid",
    "chi_star",
    "classify_dependence",
    "data_to_uniform",
    "derive_seed",
    "empirical_chi_pair",
    "estimate",
    "estimate_panel",
    "export_panel",
    "fit_gpd_mle",
    "fit_threshold_qr",
    "generate_training_set",
    "gradient_check",
    "ingest",
    "marginal_cdf",
    "marginal_quantile",
    "quantile_regression",
    "rmse_chi_star",
    "simulate_copula",
    "simulate_gaussian",
    "simulate_student_t",
    "spatial_corr",
    "substream",
    "temporal_corr",
    "train_estimator",
    "train_network",
    "uniform_to_data",
    "verify_dependence_class",
    "year_block_bootstrap",
]
