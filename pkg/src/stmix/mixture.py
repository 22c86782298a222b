"""Random scale mixtures of Pareto-margined fields on a space-time layout.

A mixture value at site s and time t is X = R^delta * W^(1-delta), where R
and W are independent fields with standard Pareto margins obtained from
Gaussian or Student-t building blocks. For variants M1-M4 the R factor is a
purely temporal process shared by all sites at a given time; for M5-M8 it is
a purely spatial process shared by all times at a given site. delta in [0, 1]
tilts the mixture between the two factors and decides which pairs of points
are asymptotically dependent (AD) or asymptotically independent (AI).

All combination happens on the log scale, X_tilde = delta*R_tilde +
(1-delta)*W_tilde with unit-exponential margins, which never overflows. The
power-scale form exists only for equivalence testing (mix_direct).

The marginal distribution of X has closed form

    G(x) = 1 - [ delta/(2 delta - 1) x^(-1/delta)
               - (1-delta)/(2 delta - 1) x^(-1/(1-delta)) ],  x >= 1,

with the delta = 1/2 limit G(x) = 1 - x^(-2) (2 log x + 1); delta in {0, 1}
collapses to the standard Pareto 1 - 1/x.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, special

from .data import PanelDataset
from .errors import DomainError, LayoutError
from .kernels import SeparableSTKernel, SpatialKernel, TemporalKernel, cholesky_with_jitter, pairwise_distances, spatial_corr, temporal_corr
from .rng import derive_seed, substream

__all__ = [
    "CopulaSpec",
    "DependenceClass",
    "VARIANTS",
    "simulate_copula",
    "simulate_marginal_values",
    "simulate_pair_uniforms",
    "marginal_cdf",
    "marginal_cdf_from_log",
    "marginal_quantile",
    "classify_dependence",
    "mix_log",
    "mix_direct",
]

# variant -> (class of R, class of W); AI components are Gaussian, AD are Student-t
VARIANTS: dict[str, tuple[str, str]] = {
    "M1": ("AI", "AD"),
    "M2": ("AD", "AI"),
    "M3": ("AI", "AI"),
    "M4": ("AD", "AD"),
    "M5": ("AI", "AD"),
    "M6": ("AD", "AI"),
    "M7": ("AI", "AI"),
    "M8": ("AD", "AD"),
}

HALF_WINDOW = 1e-6  # |delta - 0.5| below this uses the continuous limit branch


@dataclass(frozen=True)
class CopulaSpec:
    """Full parameterization of one mixture model.

    variant picks the component classes and the axis carrying R (M1-M4 time,
    M5-M8 space). phi scales the R correlation, psi1/psi2 the spatial and
    temporal factors of W. nu is the Student-t degrees of freedom for AD
    components; it stays fixed during estimation.
    """

    variant: str
    delta: float
    phi: float
    psi1: float
    psi2: float
    nu: float = 1.0
    temporal_family: str = "exponential"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")
        if not (0.0 <= self.delta <= 1.0) or not np.isfinite(self.delta):
            raise DomainError(f"delta must lie in [0, 1], got {self.delta!r}")
        for name in ("phi", "psi1", "psi2", "nu"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0.0:
                raise DomainError(f"{name} must be positive, got {v!r}")

    @property
    def r_class(self) -> str:
        return VARIANTS[self.variant][0]

    @property
    def w_class(self) -> str:
        return VARIANTS[self.variant][1]

    @property
    def r_on_space(self) -> bool:
        """True when R is indexed by site (M5-M8) rather than time."""
        return self.variant in ("M5", "M6", "M7", "M8")

    def with_dependence(self, delta: float, phi: float, psi1: float, psi2: float) -> "CopulaSpec":
        return replace(self, delta=float(delta), phi=float(phi), psi1=float(psi1), psi2=float(psi2))


@dataclass(frozen=True)
class DependenceClass:
    """AD/AI verdicts for spatial, temporal, and space-time pairs."""

    in_space: str
    in_time: str
    in_space_time: str
    eta_hint: float | None = None


def classify_dependence(spec: CopulaSpec) -> DependenceClass:
    """Limiting dependence class of the mixture for each pair type.

    Pairs lying along the axis where R is constant see it as a perfectly
    dependent common factor, so delta > 1/2 forces AD there regardless of W.
    Along the other axis (and for space-time pairs) the heavier-weighted
    component dictates the class; at delta = 1/2 both components matter and
    the pair is AD only when both components are.
    """
    r_cls, w_cls = VARIANTS[spec.variant]
    d = spec.delta

    def common_axis_rule() -> str:
        if d > 0.5:
            return "AD"
        return w_cls

    def varying_axis_rule() -> str:
        if d > 0.5:
            return r_cls
        if d < 0.5:
            return w_cls
        return "AD" if (r_cls == "AD" and w_cls == "AD") else "AI"

    if spec.r_on_space:
        in_time = common_axis_rule()
        in_space = varying_axis_rule()
    else:
        in_space = common_axis_rule()
        in_time = varying_axis_rule()
    return DependenceClass(in_space=in_space, in_time=in_time, in_space_time=varying_axis_rule())


# ---------------------------------------------------------------------------
# marginal distribution


def _validate_delta(delta: float) -> float:
    delta = float(delta)
    if not (0.0 <= delta <= 1.0) or not np.isfinite(delta):
        raise DomainError(f"delta must lie in [0, 1], got {delta!r}")
    return delta


def marginal_cdf_from_log(x_log: np.ndarray, delta: float) -> np.ndarray:
    """Mixture CDF evaluated at x = exp(x_log); x_log >= 0.

    Working from the log value keeps every term a plain exponential of a
    nonpositive number, so no overflow is possible for any delta.
    """
    delta = _validate_delta(delta)
    xt = np.asarray(x_log, dtype=float)
    if np.any(xt < -1e-12) or not np.all(np.isfinite(xt)):
        raise DomainError("marginal support is x >= 1 (log value >= 0)")
    xt = np.maximum(xt, 0.0)
    if delta == 0.0 or delta == 1.0:
        g = -np.expm1(-xt)
    elif abs(delta - 0.5) < HALF_WINDOW:
        g = 1.0 - np.exp(-2.0 * xt) * (2.0 * xt + 1.0)
    else:
        a = delta / (2.0 * delta - 1.0)
        b = (1.0 - delta) / (2.0 * delta - 1.0)
        g = 1.0 - (a * np.exp(-xt / delta) - b * np.exp(-xt / (1.0 - delta)))
    return np.clip(g, 0.0, 1.0)


def marginal_cdf(x: np.ndarray, delta: float) -> np.ndarray:
    """CDF of the mixture margin on its support x >= 1."""
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 1.0):
        raise DomainError("marginal support is x >= 1")
    return marginal_cdf_from_log(np.log(x), delta)


def marginal_quantile(u, delta: float):
    """Inverse of marginal_cdf; accepts scalars or arrays of u in [0, 1).

    Root-finding runs on the log scale with a bracketing solver; the returned
    x satisfies |marginal_cdf(x) - u| < 1e-10.
    """
    delta = _validate_delta(delta)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0.0) or np.any(u_arr >= 1.0):
        raise DomainError("u must lie in [0, 1)")

    def solve_one(ui: float) -> float:
        if ui <= 0.0:
            return 1.0
        hi = 1.0
        while marginal_cdf_from_log(hi, delta) < ui:
            hi *= 2.0
        xt = optimize.brentq(
            lambda t: float(marginal_cdf_from_log(t, delta) - ui), 0.0, hi, xtol=1e-13, rtol=8.9e-16
        )
        return float(np.exp(xt))

    if u_arr.ndim == 0:
        return solve_one(float(u_arr))
    out = np.empty(u_arr.shape, dtype=float)
    flat = out.reshape(-1)
    for i, ui in enumerate(u_arr.reshape(-1)):
        flat[i] = solve_one(float(ui))
    return out


def mix_log(r_exp: np.ndarray, w_exp: np.ndarray, delta: float) -> np.ndarray:
    """Combine unit-exponential fields on the log scale: delta*r + (1-delta)*w."""
    delta = _validate_delta(delta)
    return delta * np.asarray(r_exp, float) + (1.0 - delta) * np.asarray(w_exp, float)


def mix_direct(r_pareto: np.ndarray, w_pareto: np.ndarray, delta: float) -> np.ndarray:
    """Power-scale form r^delta * w^(1-delta); equivalence-testing path only."""
    delta = _validate_delta(delta)
    return np.asarray(r_pareto, float) ** delta * np.asarray(w_pareto, float) ** (1.0 - delta)


# ---------------------------------------------------------------------------
# simulation


def _log_survival_gaussian(z: np.ndarray) -> np.ndarray:
    sf = np.maximum(special.ndtr(-z), 2.0**-53)
    return np.log(sf)


def _log_survival_student(z: np.ndarray, nu: float) -> np.ndarray:
    sf = np.maximum(special.stdtr(nu, -z), 2.0**-53)
    return np.log(sf)


def _unit_exponential(z: np.ndarray, cls: str, nu: float) -> np.ndarray:
    if cls == "AI":
        return -_log_survival_gaussian(z)
    return -_log_survival_student(z, nu)


class _CopulaSampler:
    """Precomputed Cholesky factors for repeated year draws of one spec."""

    def __init__(self, spec: CopulaSpec, coords: np.ndarray, n_days: int):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
            raise LayoutError(f"coords must be (n, 2) with n >= 1, got {coords.shape}")
        n_days = int(n_days)
        if n_days < 1:
            raise LayoutError("n_days must be >= 1")
        self.spec = spec
        self.coords = coords
        self.n_sites = coords.shape[0]
        self.n_days = n_days
        dists = pairwise_distances(coords)
        if self.n_sites > 1:
            iu = np.triu_indices(self.n_sites, 1)
            if np.any(dists[iu] == 0.0):
                raise LayoutError("duplicate site coordinates")
        lags = np.abs(np.arange(n_days, dtype=float)[:, None] - np.arange(n_days, dtype=float)[None, :])
        if spec.r_on_space:
            r_corr = temporal_corr(dists, spec.phi, "exponential")
        else:
            r_corr = temporal_corr(lags, spec.phi, "exponential")
        w_corr_s = spatial_corr(dists, spec.psi1)
        w_corr_t = temporal_corr(lags, spec.psi2, spec.temporal_family)
        self.L_r = cholesky_with_jitter(r_corr, "R-factor correlation")
        self.L_ws = cholesky_with_jitter(w_corr_s, "W spatial factor")
        self.L_wt = cholesky_with_jitter(w_corr_t, "W temporal factor")

    def year_exponentials(self, seed: int, year: int) -> tuple[np.ndarray, np.ndarray]:
        """Unit-exponential R and W fields for one year.

        R comes back with shape (n_days,) for M1-M4 or (n_sites,) for M5-M8;
        W has shape (n_sites, n_days). R uses substream (seed, year, 0) and W
        uses (seed, year, 1), so the W draw does not depend on the R class.
        """
        spec = self.spec
        rng_r = substream(seed, year, 0)
        z_r = self.L_r @ rng_r.standard_normal(self.L_r.shape[0])
        if spec.r_class == "AD":
            z_r = z_r / np.sqrt(rng_r.gamma(shape=spec.nu / 2.0, scale=2.0 / spec.nu))
        r_exp = _unit_exponential(z_r, spec.r_class, spec.nu)

        rng_w = substream(seed, year, 1)
        z_w = self.L_ws @ rng_w.standard_normal((self.n_sites, self.n_days)) @ self.L_wt.T
        if spec.w_class == "AD":
            z_w = z_w / np.sqrt(rng_w.gamma(shape=spec.nu / 2.0, scale=2.0 / spec.nu))
        w_exp = _unit_exponential(z_w, spec.w_class, spec.nu)
        return r_exp, w_exp

    def year_uniforms(self, seed: int, year: int) -> np.ndarray:
        """(n_days, n_sites) uniform panel slice for one year."""
        r_exp, w_exp = self.year_exponentials(seed, year)
        if self.spec.r_on_space:
            x_log = mix_log(r_exp[:, None], w_exp, self.spec.delta)
        else:
            x_log = mix_log(r_exp[None, :], w_exp, self.spec.delta)
        return marginal_cdf_from_log(x_log, self.spec.delta).T


def simulate_copula(
    spec: CopulaSpec,
    coords: np.ndarray,
    n_years: int,
    n_days: int,
    seed: int,
    *,
    site_ids: list[str] | None = None,
) -> PanelDataset:
    """Simulate a uniform-margin panel of n_years independent years.

    Years are independent (fresh substreams per year); within a year, values
    follow the mixture copula on the layout. Output shape (N, T, n) wrapped as
    a PanelDataset with scale="uniform". Same arguments, same bits.
    """
    n_years = int(n_years)
    if n_years < 1:
        raise LayoutError("n_years must be >= 1")
    sampler = _CopulaSampler(spec, coords, n_days)
    values = np.empty((n_years, sampler.n_days, sampler.n_sites), dtype=float)
    for y in range(n_years):
        values[y] = sampler.year_uniforms(seed, y)
    if site_ids is None:
        site_ids = [f"S{i:02d}" for i in range(1, sampler.n_sites + 1)]
    return PanelDataset(
        site_ids=list(site_ids),
        coords=sampler.coords,
        values=values,
        mask=np.zeros(values.shape, dtype=bool),
        scale="uniform",
    )


def simulate_marginal_values(spec: CopulaSpec, size: int, seed: int) -> np.ndarray:
    """iid draws of X at a single site and time; used for marginal-law checks.

    Vectorized across replicates: each draw gets its own R and W scalar (and
    its own gamma divisor for Student-t components).
    """
    size = int(size)
    rng_r = substream(seed, 0)
    rng_w = substream(seed, 1)

    def component(rng: np.random.Generator, cls: str) -> np.ndarray:
        z = rng.standard_normal(size)
        if cls == "AD":
            g = rng.gamma(shape=spec.nu / 2.0, scale=2.0 / spec.nu, size=size)
            z = z / np.sqrt(g)
        return _unit_exponential(z, cls, spec.nu)

    r_exp = component(rng_r, spec.r_class)
    w_exp = component(rng_w, spec.w_class)
    return np.exp(mix_log(r_exp, w_exp, spec.delta))


def simulate_pair_uniforms(
    spec: CopulaSpec,
    mode: str,
    distance: float,
    lag: float,
    size: int,
    seed: int,
    *,
    chunk: int = 250_000,
) -> np.ndarray:
    """iid replicates of the copula at two points separated by (distance, lag).

    mode is "space" (lag forced 0), "time" (distance forced 0), or
    "space_time". Returns a (size, 2) array of uniform pairs. Restricting the
    full field model to two points gives a bivariate normal (or shared-gamma
    Student-t) pair for each component, which is what this draws, one pair per
    replicate.
    """
    if mode not in ("space", "time", "space_time"):
        raise DomainError(f"unknown mode {mode!r}")
    if mode == "space":
        lag = 0.0
    if mode == "time":
        distance = 0.0
    distance = float(distance)
    lag = float(lag)
    if distance < 0 or lag < 0:
        raise DomainError("distance and lag must be nonnegative")
    if mode != "time" and distance == 0.0:
        raise DomainError("spatial modes need a positive distance")
    if mode != "space" and lag == 0.0:
        raise DomainError("temporal modes need a positive lag")

    # separation of the pair along the R axis; None means R is a common factor
    if spec.r_on_space:
        r_sep = distance if distance > 0 else None
    else:
        r_sep = lag if lag > 0 else None
    rho_r = None if r_sep is None else float(np.exp(-r_sep / spec.phi))
    rho_w = float(spatial_corr(np.array(distance), spec.psi1) * temporal_corr(np.array(lag), spec.psi2, spec.temporal_family))

    rng = substream(seed, 7)
    out = np.empty((size, 2), dtype=float)
    done = 0
    while done < size:
        m = min(chunk, size - done)

        def correlated_pair(rho: float | None, cls: str) -> np.ndarray:
            if rho is None:
                z = rng.standard_normal(m)
                pair = np.stack([z, z], axis=1)
            else:
                e = rng.standard_normal((m, 2))
                z2 = rho * e[:, 0] + np.sqrt(max(0.0, 1.0 - rho * rho)) * e[:, 1]
                pair = np.stack([e[:, 0], z2], axis=1)
            if cls == "AD":
                g = rng.gamma(shape=spec.nu / 2.0, scale=2.0 / spec.nu, size=m)
                pair = pair / np.sqrt(g)[:, None]
            return _unit_exponential(pair, cls, spec.nu)

        r_exp = correlated_pair(rho_r, spec.r_class)
        w_exp = correlated_pair(rho_w, spec.w_class)
        x_log = mix_log(r_exp, w_exp, spec.delta)
        out[done : done + m] = marginal_cdf_from_log(x_log, spec.delta)
        done += m
    return out
