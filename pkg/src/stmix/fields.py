"""Latent Gaussian and Student-t random fields with standard-Pareto transforms.

Fields live on a layout of n sites by T times. A separable correlation lets us
avoid the dense (nT x nT) Cholesky: with spatial factor S = L_S L_S' and
temporal factor T = L_T L_T', a draw is V = L_S Z L_T' for Z an (n, T) matrix
of iid standard normals. Flattening V in C-order reproduces exactly
chol(kron(S, T)) @ vec(Z), because chol(kron(S, T)) = kron(L_S, L_T) and
vec_row(A Z B') = (A kron B) vec_row(Z). The dense path is kept for
equivalence testing; both paths consume the same normal draws in the same
order, so they agree to floating-point error, not just in distribution.

Student-t fields divide one Gaussian field by sqrt(g) with a single
g ~ Gamma(shape nu/2, rate nu/2) draw per field, giving t(nu) margins and
asymptotic dependence. The gamma variate is drawn after the normals from the
same substream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, LayoutError
from .kernels import (
    SeparableSTKernel,
    build_covariance,
    cholesky_with_jitter,
    pairwise_distances,
    temporal_corr,
)
from .rng import substream

__all__ = [
    "FieldSpec",
    "FieldSample",
    "simulate_gaussian",
    "simulate_student_t",
    "to_standard_pareto",
    "to_unit_exponential",
]

MAX_LOG_PARETO = 53 * np.log(2.0)  # survival clamp at 2^-53 caps Pareto at 2^53
MIN_SURVIVAL = 2.0**-53


@dataclass(frozen=True)
class FieldSpec:
    """Layout plus correlation for one latent field.

    Either axis may be absent: coords=None gives a purely temporal process,
    times=None a purely spatial one. corr_scale_* are the kernel scales;
    families default to the Cauchy (space) and exponential (time) forms.
    """

    coords: np.ndarray | None
    times: np.ndarray | None
    kernel: SeparableSTKernel | None = None
    single_axis_scale: float | None = None
    single_axis_family: str = "exponential"

    def __post_init__(self) -> None:
        if self.coords is None and self.times is None:
            raise LayoutError("FieldSpec needs at least one axis")
        if self.coords is not None and self.times is not None and self.kernel is None:
            raise LayoutError("space-time field needs a separable kernel")
        if (self.coords is None) != (self.times is None):
            if self.single_axis_scale is None:
                raise LayoutError("single-axis field needs single_axis_scale")


@dataclass(frozen=True)
class FieldSample:
    """Simulated field values plus the seed that produced them.

    values has shape (n_sites, n_times) for space-time fields, (n_times,) or
    (n_sites,) for single-axis fields.
    """

    values: np.ndarray
    process: str
    nu: float | None
    rng_seed: int
    meta: dict = field(default_factory=dict)


def _single_axis_corr(spec: FieldSpec) -> tuple[np.ndarray, str]:
    if spec.times is not None:
        t = np.asarray(spec.times, dtype=float)
        lags = np.abs(t[:, None] - t[None, :])
        return temporal_corr(lags, spec.single_axis_scale, spec.single_axis_family), "temporal"
    d = pairwise_distances(spec.coords)
    return temporal_corr(d, spec.single_axis_scale, spec.single_axis_family), "spatial"


def _draw_gaussian(spec: FieldSpec, rng: np.random.Generator, method: str) -> np.ndarray:
    if spec.coords is not None and spec.times is not None:
        factors = build_covariance(spec.kernel, spec.coords, spec.times)
        n = factors.spatial.shape[0]
        T = factors.temporal.shape[0]
        L_S = cholesky_with_jitter(factors.spatial, "spatial factor")
        L_T = cholesky_with_jitter(factors.temporal, "temporal factor")
        Z = rng.standard_normal((n, T))
        if method == "kronecker":
            return L_S @ Z @ L_T.T
        if method == "dense":
            L_full = cholesky_with_jitter(np.kron(factors.spatial, factors.temporal), "full")
            return (L_full @ Z.ravel()).reshape(n, T)
        raise DomainError(f"unknown method {method!r}")
    corr, name = _single_axis_corr(spec)
    L = cholesky_with_jitter(corr, f"{name} factor")
    z = rng.standard_normal(corr.shape[0])
    return L @ z


def simulate_gaussian(spec: FieldSpec, seed: int, *, method: str = "kronecker") -> FieldSample:
    """Draw one standard-normal-marginal field on the layout in spec.

    Same (spec, seed) gives bit-identical values. method="dense" factors the
    full Kronecker covariance instead; it consumes the same normals and exists
    for equivalence checks.
    """
    rng = substream(seed)
    values = _draw_gaussian(spec, rng, method)
    return FieldSample(values=values, process="gaussian", nu=None, rng_seed=int(seed))


def simulate_student_t(
    spec: FieldSpec, seed: int, nu: float = 1.0, *, method: str = "kronecker"
) -> FieldSample:
    """Draw one t(nu)-marginal field: Gaussian field over sqrt(g), one gamma draw.

    The single shared g ~ Gamma(nu/2, rate nu/2) is what makes the field
    asymptotically dependent; it is drawn after the normals so the Gaussian
    part matches simulate_gaussian with the same seed.
    """
    nu = float(nu)
    if not np.isfinite(nu) or nu <= 0.0:
        raise DomainError(f"nu must be positive, got {nu!r}")
    rng = substream(seed)
    z = _draw_gaussian(spec, rng, method)
    g = rng.gamma(shape=nu / 2.0, scale=2.0 / nu)
    return FieldSample(
        values=z / np.sqrt(g), process="student_t", nu=nu, rng_seed=int(seed), meta={"g": g}
    )


def _log_survival(values: np.ndarray, process: str, nu: float | None) -> np.ndarray:
    if process == "gaussian":
        sf = stats.norm.sf(values)
    elif process == "student_t":
        if nu is None:
            raise DomainError("student_t transform needs nu")
        sf = stats.t.sf(values, df=nu)
    else:
        raise DomainError(f"unknown process class {process!r}")
    sf = np.maximum(sf, MIN_SURVIVAL)  # clamp so the Pareto value stays finite
    return np.log(sf)


def to_standard_pareto(sample: FieldSample) -> np.ndarray:
    """Map field values to standard Pareto margins, x = 1 / F_bar(v).

    Strictly increasing in v; outputs lie in [1, 2^53] because the survival
    function is clamped at 2^-53.
    """
    return np.exp(-_log_survival(sample.values, sample.process, sample.nu))


def to_unit_exponential(sample: FieldSample) -> np.ndarray:
    """Map field values to unit-exponential margins, log of the Pareto value.

    This is the numerically safe scale on which mixture fields are combined.
    """
    return -_log_survival(sample.values, sample.process, sample.nu)
