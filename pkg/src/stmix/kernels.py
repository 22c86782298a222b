"""Correlation kernels for the latent Gaussian building blocks.

Three families are supported:

* temporal, exponential:          rho(k) = exp(-k / scale)
* temporal, squared exponential:  rho(k) = exp(-(k / scale)^2)
* spatial, Cauchy:                rho(h) = 1 / (1 + (h / scale)^2)

Space-time kernels are separable products rho(h, k) = rho_s(h) * rho_t(k).
All kernels are correlation functions: rho(0) = 1, symmetric in the lag, and
strictly decreasing in |lag| for positive scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LayoutError, NumericalError

__all__ = [
    "TemporalKernel",
    "SpatialKernel",
    "SeparableSTKernel",
    "temporal_corr",
    "spatial_corr",
    "build_covariance",
    "CovarianceFactors",
    "kernel_to_json",
    "kernel_from_json",
]

TEMPORAL_FAMILIES = ("exponential", "squared_exponential")
SPATIAL_FAMILIES = ("cauchy",)


def _check_scale(scale: float, who: str) -> float:
    scale = float(scale)
    if not np.isfinite(scale) or scale <= 0.0:
        raise DomainError(f"{who}: scale must be a positive finite real, got {scale!r}")
    return scale


@dataclass(frozen=True)
class TemporalKernel:
    """Correlation over time lags, exp(-k/scale) or exp(-(k/scale)^2)."""

    scale: float
    family: str = "exponential"

    def __post_init__(self) -> None:
        _check_scale(self.scale, "TemporalKernel")
        if self.family not in TEMPORAL_FAMILIES:
            raise DomainError(f"unknown temporal family {self.family!r}")

    def __call__(self, lags: np.ndarray) -> np.ndarray:
        return temporal_corr(lags, self.scale, self.family)


@dataclass(frozen=True)
class SpatialKernel:
    """Cauchy correlation over Euclidean distance, 1/(1 + (h/scale)^2)."""

    scale: float
    family: str = "cauchy"

    def __post_init__(self) -> None:
        _check_scale(self.scale, "SpatialKernel")
        if self.family not in SPATIAL_FAMILIES:
            raise DomainError(f"unknown spatial family {self.family!r}")

    def __call__(self, dists: np.ndarray) -> np.ndarray:
        return spatial_corr(dists, self.scale)


@dataclass(frozen=True)
class SeparableSTKernel:
    """Product kernel rho(h, k) = spatial(h) * temporal(k)."""

    spatial: SpatialKernel
    temporal: TemporalKernel

    def __call__(self, dists: np.ndarray, lags: np.ndarray) -> np.ndarray:
        return self.spatial(dists) * self.temporal(lags)


def temporal_corr(lags: np.ndarray, scale: float, family: str = "exponential") -> np.ndarray:
    """Temporal correlation at integer or real lags; negative lags mirror."""
    scale = _check_scale(scale, "temporal_corr")
    k = np.abs(np.asarray(lags, dtype=float))
    if family == "exponential":
        return np.exp(-k / scale)
    if family == "squared_exponential":
        return np.exp(-((k / scale) ** 2))
    raise DomainError(f"unknown temporal family {family!r}")


def spatial_corr(dists: np.ndarray, scale: float) -> np.ndarray:
    """Cauchy spatial correlation at Euclidean distances >= 0."""
    scale = _check_scale(scale, "spatial_corr")
    h = np.asarray(dists, dtype=float)
    if np.any(h < 0):
        raise DomainError("spatial_corr: distances must be nonnegative")
    return 1.0 / (1.0 + (h / scale) ** 2)


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix for an (n, 2) coordinate array."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise LayoutError(f"coords must be (n, 2), got shape {coords.shape}")
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


@dataclass(frozen=True)
class CovarianceFactors:
    """Spatial and temporal correlation factors of a separable covariance.

    The full matrix is np.kron(spatial, temporal) under the flat index
    k = site * n_times + time, i.e. a (sites, times) field flattened C-order.
    """

    spatial: np.ndarray
    temporal: np.ndarray

    @property
    def full(self) -> np.ndarray:
        return np.kron(self.spatial, self.temporal)


def build_covariance(
    kernel: SeparableSTKernel,
    coords: np.ndarray,
    times: np.ndarray,
    *,
    full: bool = False,
) -> CovarianceFactors | np.ndarray:
    """Correlation matrix of a separable space-time field on (coords, times).

    Returns the CovarianceFactors pair by default; pass full=True for the
    dense Kronecker product. Duplicate sites or times make the factors
    singular and raise.
    """
    coords = np.asarray(coords, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise LayoutError("times must be a nonempty 1-d array")
    dists = pairwise_distances(coords)
    n = coords.shape[0]
    if n == 0:
        raise LayoutError("need at least one site")
    iu = np.triu_indices(n, 1)
    if n > 1 and np.any(dists[iu] == 0.0):
        raise LayoutError("duplicate site coordinates make the spatial factor singular")
    tl = np.abs(times[:, None] - times[None, :])
    if times.size > 1:
        ju = np.triu_indices(times.size, 1)
        if np.any(tl[ju] == 0.0):
            raise LayoutError("duplicate times make the temporal factor singular")
    factors = CovarianceFactors(
        spatial=kernel.spatial(dists),
        temporal=kernel.temporal(tl),
    )
    return factors.full if full else factors


def cholesky_with_jitter(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, adding diagonal jitter 1e-10..1e-6 if needed.

    Raises NumericalError naming the offending factor once the jitter ladder
    is exhausted.
    """
    mat = np.asarray(mat, dtype=float)
    jitters = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6]
    for eps in jitters:
        try:
            if eps == 0.0:
                return np.linalg.cholesky(mat)
            return np.linalg.cholesky(mat + eps * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"Cholesky of {name} failed after jitter up to 1e-6; matrix is not positive definite"
    )


def kernel_to_json(kernel: TemporalKernel | SpatialKernel | SeparableSTKernel) -> str:
    """Serialize a kernel to a JSON string; round-trips exactly."""
    if isinstance(kernel, TemporalKernel):
        obj = {"type": "temporal", "family": kernel.family, "scale": kernel.scale}
    elif isinstance(kernel, SpatialKernel):
        obj = {"type": "spatial", "family": kernel.family, "scale": kernel.scale}
    elif isinstance(kernel, SeparableSTKernel):
        obj = {
            "type": "separable",
            "spatial": {"family": kernel.spatial.family, "scale": kernel.spatial.scale},
            "temporal": {"family": kernel.temporal.family, "scale": kernel.temporal.scale},
        }
    else:
        raise DomainError(f"cannot serialize {type(kernel).__name__}")
    return json.dumps(obj, sort_keys=True)


def kernel_from_json(text: str) -> TemporalKernel | SpatialKernel | SeparableSTKernel:
    obj = json.loads(text)
    kind = obj.get("type")
    if kind == "temporal":
        return TemporalKernel(scale=obj["scale"], family=obj["family"])
    if kind == "spatial":
        return SpatialKernel(scale=obj["scale"], family=obj["family"])
    if kind == "separable":
        return SeparableSTKernel(
            spatial=SpatialKernel(scale=obj["spatial"]["scale"], family=obj["spatial"]["family"]),
            temporal=TemporalKernel(
                scale=obj["temporal"]["scale"], family=obj["temporal"]["family"]
            ),
        )
    raise DomainError(f"unknown kernel type {kind!r}")
