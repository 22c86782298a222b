"""Peaks-over-threshold marginal layer.

Site margins are modeled above a per-site threshold mu(s) by a generalized
Pareto (GPD) tail with shared scale sigma and shape xi; below the threshold
the distribution is left unspecified and treated as censored. On the uniform
scale the threshold sits at probability p, so the quantile map is

    Q(u) = mu                                       0 < u <= p
    Q(u) = mu + sigma * (w^(-xi) - 1) / xi          u > p,  w = (1-u)/(1-p)

with the xi -> 0 limit mu - sigma*log(w). The CDF inverts it exactly above p
and collapses everything at or below mu to p.

Thresholds come from linear quantile regression of the values on site
coordinates at level tau. The GPD is fit to pooled exceedances by maximum
likelihood under a working independence assumption; standard errors from the
observed information therefore understate the real uncertainty, and the
parametric bootstrap is the uncertainty source that counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .data import PanelDataset
from .errors import DomainError, EstimationError, LayoutError, NumericalError

__all__ = [
    "MarginalSpec",
    "ThresholdFit",
    "GPDFit",
    "pinball_loss",
    "quantile_regression",
    "fit_threshold_qr",
    "uniform_to_data",
    "data_to_uniform",
    "fit_gpd_mle",
]

XI_ZERO = 1e-8  # |xi| below this uses the exponential branch
MIN_EXCEEDANCES = 30


@dataclass(frozen=True)
class MarginalSpec:
    """GPD tail above the uniform-scale threshold probability p."""

    p: float
    sigma: float
    xi: float

    def __post_init__(self) -> None:
        if not (0.0 < self.p < 1.0):
            raise DomainError(f"p must lie in (0, 1), got {self.p!r}")
        if not np.isfinite(self.sigma) or self.sigma <= 0.0:
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")
        if not np.isfinite(self.xi) or not (-0.5 < self.xi < 1.0):
            raise DomainError(f"xi must lie in (-0.5, 1), got {self.xi!r}")


def uniform_to_data(u: np.ndarray, mu: np.ndarray, spec: MarginalSpec) -> np.ndarray:
    """Quantile map Q(u) with per-point thresholds mu; u in [0, 1)."""
    u = np.asarray(u, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), u.shape)
    if np.any(u < 0.0) or np.any(u >= 1.0) or not np.all(np.isfinite(u)):
        raise DomainError("u must lie in [0, 1)")
    out = np.array(mu, dtype=float, copy=True)
    above = u > spec.p
    if np.any(above):
        w = (1.0 - u[above]) / (1.0 - spec.p)
        if abs(spec.xi) < XI_ZERO:
            out[above] = mu[above] - spec.sigma * np.log(w)
        else:
            out[above] = mu[above] + spec.sigma * np.expm1(-spec.xi * np.log(w)) / spec.xi
    return out


def data_to_uniform(y: np.ndarray, mu: np.ndarray, spec: MarginalSpec) -> np.ndarray:
    """CDF F(y): p at or below the threshold, GPD tail above.

    For xi < 0 values beyond the finite upper endpoint mu - sigma/xi are
    outside the model support and raise.
    """
    y = np.asarray(y, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), y.shape)
    if not np.all(np.isfinite(y)):
        raise DomainError("y must be finite")
    out = np.full(y.shape, spec.p, dtype=float)
    above = y > mu
    if np.any(above):
        z = (y[above] - mu[above]) / spec.sigma
        if abs(spec.xi) < XI_ZERO:
            tail = np.exp(-z)
        else:
            base = 1.0 + spec.xi * z
            if np.any(base <= 0.0):
                raise DomainError("value beyond the upper endpoint mu - sigma/xi for xi < 0")
            tail = base ** (-1.0 / spec.xi)
        out[above] = spec.p + (1.0 - spec.p) * (1.0 - tail)
    return out


# ---------------------------------------------------------------------------
# threshold surface by quantile regression


def pinball_loss(residuals: np.ndarray, tau: float) -> float:
    """Mean check loss rho_tau(e) = e * (tau - 1{e < 0})."""
    e = np.asarray(residuals, dtype=float)
    return float(np.mean(e * (tau - (e < 0.0))))


def quantile_regression(X: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Exact tau-quantile regression coefficients via linear programming.

    Minimizes sum_i rho_tau(y_i - X_i beta). The LP splits residuals into
    positive and negative parts; HiGHS solves it deterministically.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (0.0 < tau < 1.0):
        raise DomainError(f"tau must lie in (0, 1), got {tau!r}")
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise LayoutError("X must be (n, k) matching y")
    n, k = X.shape
    if n < k:
        raise LayoutError("need at least as many observations as coefficients")
    c = np.concatenate([np.zeros(k), np.full(n, tau), np.full(n, 1.0 - tau)])
    eye = sparse.eye(n, format="csc")
    A_eq = sparse.hstack([sparse.csc_matrix(X), eye, -eye], format="csc")
    bounds = [(None, None)] * k + [(0.0, None)] * (2 * n)
    # interior point with crossover still lands on a basic optimum and is an
    # order of magnitude faster than simplex at panel sizes; keep simplex as
    # the fallback for degenerate corner cases
    res = optimize.linprog(c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs-ipm")
    if not res.success:
        res = optimize.linprog(c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise NumericalError(f"quantile regression LP failed: {res.message}")
    return np.asarray(res.x[:k], dtype=float)


@dataclass(frozen=True)
class ThresholdFit:
    """tau-quantile plane mu(s) = b0 + b1 * x + b2 * y over site coordinates."""

    tau: float
    coefficients: np.ndarray
    mu_site: np.ndarray
    loss: float

    def predict(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return self.coefficients[0] + coords @ self.coefficients[1:]


def fit_threshold_qr(panel: PanelDataset, tau: float = 0.90) -> ThresholdFit:
    """Fit the threshold surface on all unmasked observations.

    A single-site panel reduces to the empirical tau-quantile (linear
    interpolation) with zero slopes; that choice matches the quantile type
    used by the tail statistics and can differ from an LP vertex by less than
    the data spacing. Multi-site panels need >= 3 non-collinear sites.
    """
    if not (0.0 < tau < 1.0):
        raise DomainError(f"tau must lie in (0, 1), got {tau!r}")
    n = panel.n_sites
    if n == 1:
        vals = panel.values[:, :, 0][~panel.mask[:, :, 0]]
        if vals.size == 0:
            raise EstimationError("no observations at the single site")
        mu = float(np.quantile(vals, tau))
        coef = np.array([mu, 0.0, 0.0])
        return ThresholdFit(
            tau=tau, coefficients=coef, mu_site=np.array([mu]), loss=pinball_loss(vals - mu, tau)
        )
    design_sites = np.column_stack([np.ones(n), panel.coords])
    if np.linalg.matrix_rank(design_sites) < 3:
        raise LayoutError("need >= 3 sites with non-collinear coordinates")
    keep = ~panel.mask
    y = panel.values[keep]
    site_of_obs = np.broadcast_to(np.arange(n), panel.values.shape)[keep]
    X = design_sites[site_of_obs]
    coef = quantile_regression(X, y, tau)
    mu_site = design_sites @ coef
    return ThresholdFit(
        tau=tau, coefficients=coef, mu_site=mu_site, loss=pinball_loss(y - X @ coef, tau)
    )


# ---------------------------------------------------------------------------
# GPD maximum likelihood


@dataclass(frozen=True)
class GPDFit:
    """MLE of the GPD tail with observed-information standard errors.

    The standard errors assume independent exceedances and understate the
    spread under spatio-temporal dependence; bootstrap intervals are the
    authoritative uncertainty statement.
    """

    sigma: float
    xi: float
    se_sigma: float
    se_xi: float
    n_exceedances: int
    nll: float
    grad_norm: float
    converged: bool
    at_boundary: bool


def _gpd_nll_grad(params: np.ndarray, e: np.ndarray) -> tuple[float, np.ndarray]:
    sigma, xi = float(params[0]), float(params[1])
    n = e.size
    z = e / sigma
    if abs(xi) < XI_ZERO:
        nll = n * np.log(sigma) + z.sum()
        d_sigma = n / sigma - z.sum() / sigma
        d_xi = float(np.sum(z - 0.5 * z * z))
        return float(nll), np.array([d_sigma, d_xi])
    t = xi * z
    if np.any(t <= -1.0):
        return np.inf, np.array([0.0, 0.0])
    log1pt = np.log1p(t)
    nll = n * np.log(sigma) + (1.0 + 1.0 / xi) * log1pt.sum()
    frac = z / (1.0 + t)
    d_sigma = n / sigma - (1.0 + xi) / sigma * frac.sum()
    d_xi = -log1pt.sum() / xi**2 + (1.0 + 1.0 / xi) * frac.sum()
    return float(nll), np.array([d_sigma, d_xi])


def fit_gpd_mle(exceedances: np.ndarray) -> GPDFit:
    """Fit GPD(sigma, xi) to positive exceedances by box-constrained MLE.

    Starts from moment estimates, runs L-BFGS-B with the analytic gradient on
    the box sigma > 0, xi in (-0.5, 1), then polishes with Newton steps on the
    observed information until the scaled gradient norm is below 1e-8 or the
    boundary interferes.
    """
    e = np.asarray(exceedances, dtype=float).ravel()
    if e.size < MIN_EXCEEDANCES:
        raise EstimationError(f"need >= {MIN_EXCEEDANCES} exceedances, got {e.size}")
    if np.any(~np.isfinite(e)) or np.any(e <= 0.0):
        raise DomainError("exceedances must be positive and finite")

    m = float(e.mean())
    s2 = float(e.var(ddof=1))
    if s2 <= 0.0:
        raise EstimationError("degenerate exceedances (zero variance)")
    ratio = m * m / s2
    xi0 = float(np.clip(0.5 * (1.0 - ratio), -0.45, 0.9))
    sigma0 = float(max(0.5 * m * (1.0 + ratio), 1e-8 * m))

    xi_lo, xi_hi = -0.5 + 1e-9, 1.0 - 1e-9
    sigma_lo = 1e-10 * m
    res = optimize.minimize(
        _gpd_nll_grad,
        x0=np.array([sigma0, xi0]),
        args=(e,),
        jac=True,
        method="L-BFGS-B",
        bounds=[(sigma_lo, None), (xi_lo, xi_hi)],
        options={"maxiter": 500, "ftol": 1e-14, "gtol": 1e-12},
    )
    sigma, xi = float(res.x[0]), float(res.x[1])

    def scaled_norm(grad: np.ndarray, sg: float) -> float:
        # sigma direction made scale-free by multiplying through sigma
        return float(np.hypot(grad[0] * sg, grad[1]) / e.size)

    at_boundary = xi <= xi_lo + 1e-7 or xi >= xi_hi - 1e-7 or sigma <= sigma_lo * 2
    _, grad = _gpd_nll_grad(np.array([sigma, xi]), e)
    if not at_boundary:
        for _ in range(25):
            if scaled_norm(grad, sigma) < 1e-10:
                break
            H = _numeric_hessian(np.array([sigma, xi]), e)
            try:
                step = np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                break
            cand = np.array([sigma, xi]) - step
            if not (cand[0] > sigma_lo and xi_lo < cand[1] < xi_hi):
                break
            nll_new, grad_new = _gpd_nll_grad(cand, e)
            if not np.isfinite(nll_new):
                break
            sigma, xi = float(cand[0]), float(cand[1])
            grad = grad_new

    nll, grad = _gpd_nll_grad(np.array([sigma, xi]), e)
    gnorm = scaled_norm(grad, sigma)
    H = _numeric_hessian(np.array([sigma, xi]), e)
    se_sigma = se_xi = float("nan")
    try:
        cov = np.linalg.inv(H)
        if cov[0, 0] > 0 and cov[1, 1] > 0:
            se_sigma = float(np.sqrt(cov[0, 0]))
            se_xi = float(np.sqrt(cov[1, 1]))
    except np.linalg.LinAlgError:
        pass
    return GPDFit(
        sigma=sigma,
        xi=xi,
        se_sigma=se_sigma,
        se_xi=se_xi,
        n_exceedances=int(e.size),
        nll=float(nll),
        grad_norm=gnorm,
        converged=bool(res.success and gnorm < 1e-6),
        at_boundary=bool(at_boundary),
    )


def _numeric_hessian(params: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Central differences of the analytic gradient; observed information."""
    h = np.maximum(np.abs(params), 1.0) * 1e-6
    H = np.zeros((2, 2))
    for j in range(2):
        up = params.copy()
        dn = params.copy()
        up[j] += h[j]
        dn[j] -= h[j]
        _, gu = _gpd_nll_grad(up, e)
        _, gd = _gpd_nll_grad(dn, e)
        H[:, j] = (gu - gd) / (2.0 * h[j])
    return 0.5 * (H + H.T)
