"""Empirical tail-dependence statistics on space-time panels.

The workhorse is the pairwise coefficient

    chi_hat(u) = #{both series exceed their empirical u-quantile}
                 / (#valid pairings * (1 - u)),

computed per site pair at a time lag k, pooling the N independent years and
every in-year day pair (t, t + k). Pairings never cross a year boundary.
Per-site quantiles pool all years at that site and use linear interpolation,
the same quantile type used everywhere in this package. Estimates are clipped
to [0, 1]; chi_hat can exceed 1 by construction since the denominator is not
the joint count.

chi_grid aggregates pair estimates into a (levels x distance-bins x lags)
tensor that serves as the summary statistic for estimation. Distance bins are
left-closed right-open on [0, max_dist]; self-pairs are excluded at every lag
(same-site temporal curves are exposed separately); lags above 0 average both
orientations of each unordered pair.

chi_star is the storm-propagation diagnostic: the probability that all four
nearest neighbors of a site exceed the u-quantile at time t given the site
exceeded at t - k.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import PanelDataset
from .errors import DomainError, LayoutError, PrecisionError
from .kernels import pairwise_distances
from .mixture import CopulaSpec, classify_dependence, simulate_pair_uniforms
from .rng import derive_seed, substream

__all__ = [
    "GridConfig",
    "ChiGrid",
    "PairChi",
    "empirical_chi_pair",
    "chi_grid",
    "same_site_lag_chi",
    "chi_star",
    "rmse_chi_star",
    "verify_dependence_class",
    "ClassificationReport",
    "year_block_bootstrap",
]

DEFAULT_LEVELS = (0.90, 0.95, 0.99)


@dataclass(frozen=True)
class GridConfig:
    """Shape of the chi summary grid.

    max_dist=None means half the site diameter (largest pairwise distance),
    mirroring the application where 34 km is half the 68 km extent.
    """

    u_levels: tuple[float, ...] = DEFAULT_LEVELS
    n_dist_bins: int = 8
    lags: tuple[int, ...] = tuple(range(8))
    max_dist: float | None = None

    def __post_init__(self) -> None:
        if len(self.u_levels) == 0 or any(not (0.0 < u < 1.0) for u in self.u_levels):
            raise DomainError("u_levels must lie in (0, 1)")
        if self.n_dist_bins < 1:
            raise DomainError("need at least one distance bin")
        if len(self.lags) == 0 or any(k < 0 for k in self.lags):
            raise DomainError("lags must be nonnegative")
        if self.max_dist is not None and self.max_dist <= 0:
            raise DomainError("max_dist must be positive")


@dataclass
class ChiGrid:
    """chi_hat tensor (levels x distance bins x lags) with its geometry."""

    values: np.ndarray
    u_levels: tuple[float, ...]
    dist_edges: np.ndarray
    lags: tuple[int, ...]
    n_pairs: np.ndarray
    n_clipped: int = 0

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def to_csv(self, path) -> None:
        """Long-format plot data: level,u,dist_lo,dist_hi,lag,chi,n_pairs."""
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "u", "dist_lo", "dist_hi", "lag", "chi", "n_pairs"])
            for li, u in enumerate(self.u_levels):
                for bi in range(len(self.dist_edges) - 1):
                    for ki, lag in enumerate(self.lags):
                        v = self.values[li, bi, ki]
                        w.writerow(
                            [
                                li,
                                repr(float(u)),
                                repr(float(self.dist_edges[bi])),
                                repr(float(self.dist_edges[bi + 1])),
                                lag,
                                "" if np.isnan(v) else repr(float(v)),
                                int(self.n_pairs[bi, ki]),
                            ]
                        )

    def to_json(self) -> str:
        def encode(a: np.ndarray):
            return [[None if np.isnan(v) else float(v) for v in row] for row in a]

        obj = {
            "format_version": 1,
            "u_levels": [float(u) for u in self.u_levels],
            "dist_edges": [float(e) for e in self.dist_edges],
            "lags": [int(k) for k in self.lags],
            "values": [encode(level) for level in self.values],
            "n_pairs": [[int(v) for v in row] for row in self.n_pairs],
            "n_clipped": int(self.n_clipped),
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ChiGrid":
        obj = json.loads(text)
        values = np.array(
            [[[np.nan if v is None else v for v in row] for row in level] for level in obj["values"]],
            dtype=float,
        )
        return cls(
            values=values,
            u_levels=tuple(obj["u_levels"]),
            dist_edges=np.array(obj["dist_edges"], dtype=float),
            lags=tuple(obj["lags"]),
            n_pairs=np.array(obj["n_pairs"], dtype=int),
            n_clipped=int(obj["n_clipped"]),
        )


@dataclass(frozen=True)
class PairChi:
    """One pairwise estimate with its effective pairing count."""

    sites: tuple[int, int]
    lag: int
    u: float
    chi_hat: float
    n_effective: int
    clipped: bool


def _check_u(u: float) -> float:
    u = float(u)
    if not (0.0 < u < 1.0):
        raise DomainError(f"u must lie in (0, 1), got {u!r}")
    return u


def _site_quantiles(panel: PanelDataset, u_levels: tuple[float, ...]) -> np.ndarray:
    """(L, n) pooled per-site empirical quantiles, linear interpolation."""
    n = panel.n_sites
    out = np.empty((len(u_levels), n), dtype=float)
    flat_vals = panel.values.reshape(-1, n)
    flat_mask = panel.mask.reshape(-1, n)
    for i in range(n):
        v = flat_vals[~flat_mask[:, i], i]
        if v.size == 0:
            raise DomainError(f"site {panel.site_ids[i]} has no observations")
        out[:, i] = np.quantile(v, u_levels)
    return out


def _lag_components(
    E: np.ndarray, V: np.ndarray, lag: int
) -> tuple[np.ndarray, np.ndarray]:
    """Joint exceedance counts and valid pairing counts at one lag.

    E is (L, N, T, n) float32 exceedance indicators (0 where invalid),
    V is (N, T, n) float32 validity. Returns count (L, n, n) for ordered
    (i at t, j at t + lag) and denom (n, n).
    """
    T = E.shape[2]
    if lag >= T:
        raise LayoutError(f"lag {lag} does not fit in a year of length {T}")
    if lag == 0:
        count = np.einsum("lyti,lytj->lij", E, E, optimize=True)
        denom = np.einsum("yti,ytj->ij", V, V, optimize=True)
    else:
        count = np.einsum("lyti,lytj->lij", E[:, :, :-lag, :], E[:, :, lag:, :], optimize=True)
        denom = np.einsum("yti,ytj->ij", V[:, :-lag, :], V[:, lag:, :], optimize=True)
    return count, denom


def _exceedance_cube(
    panel: PanelDataset, u_levels: tuple[float, ...]
) -> tuple[np.ndarray, np.ndarray]:
    q = _site_quantiles(panel, u_levels)  # (L, n)
    valid = ~panel.mask
    E = (panel.values[None, ...] > q[:, None, None, :]) & valid[None, ...]
    return E.astype(np.float32), valid.astype(np.float32)


def empirical_chi_pair(
    panel: PanelDataset, sites: tuple[int, int], lag: int, u: float
) -> PairChi:
    """chi_hat for one (possibly same-site) pair at one lag and level.

    Distinct sites at lag > 0 average both orientations; a same-site pair has
    a single orientation. Same-site at lag 0 is degenerate and rejected.
    """
    u = _check_u(u)
    i, j = int(sites[0]), int(sites[1])
    n = panel.n_sites
    if not (0 <= i < n and 0 <= j < n):
        raise LayoutError(f"site indices {sites} out of range for {n} sites")
    lag = int(lag)
    if lag < 0:
        raise DomainError("lag must be nonnegative")
    if lag >= panel.n_days:
        raise LayoutError(f"lag {lag} does not fit in a year of length {panel.n_days}")
    if i == j and lag == 0:
        raise DomainError("same-site pair at lag 0 is degenerate (chi = 1)")

    sub = panel.subset_sites(np.array([i, j] if i != j else [i]))
    E, V = _exceedance_cube(sub, (u,))
    count, denom = _lag_components(E, V, lag)
    a, b = (0, 1) if i != j else (0, 0)
    if lag == 0:
        num = count[0, a, b]
        den = denom[a, b]
    elif i == j:
        num = count[0, a, a]
        den = denom[a, a]
    else:
        num = count[0, a, b] + count[0, b, a]
        den = denom[a, b] + denom[b, a]
    if den == 0:
        return PairChi(sites=(i, j), lag=lag, u=u, chi_hat=float("nan"), n_effective=0, clipped=False)
    raw = float(num) / (float(den) * (1.0 - u))
    return PairChi(
        sites=(i, j),
        lag=lag,
        u=u,
        chi_hat=min(raw, 1.0),
        n_effective=int(round(float(den))),
        clipped=raw > 1.0,
    )


def _pair_bins(dists: np.ndarray, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle pair indices and their distance-bin assignment (-1 = out)."""
    n = dists.shape[0]
    iu, ju = np.triu_indices(n, 1)
    d = dists[iu, ju]
    bins = np.searchsorted(edges, d, side="right") - 1
    bins[(d < edges[0]) | (d >= edges[-1])] = -1
    return iu, ju, bins


def chi_grid(panel: PanelDataset, config: GridConfig = GridConfig()) -> ChiGrid:
    """Summary tensor of pairwise chi_hat over (level, distance bin, lag).

    Each cell is the unweighted mean over qualifying distinct-site pairs of
    the clipped pair estimate; cells with no qualifying pair (or no valid
    pairings) are NaN. Relabeling sites leaves the grid unchanged.
    """
    if panel.n_sites < 2:
        raise LayoutError("chi_grid needs at least two sites")
    max_lag = max(config.lags)
    if max_lag >= panel.n_days:
        raise LayoutError(f"lag {max_lag} does not fit in a year of length {panel.n_days}")
    dists = pairwise_distances(panel.coords)
    max_dist = config.max_dist
    if max_dist is None:
        max_dist = float(dists.max()) / 2.0
        if max_dist <= 0:
            raise LayoutError("degenerate layout: all sites coincide")
    edges = np.linspace(0.0, max_dist, config.n_dist_bins + 1)
    iu, ju, bins = _pair_bins(dists, edges)

    E, V = _exceedance_cube(panel, config.u_levels)
    L = len(config.u_levels)
    m1, m2 = config.n_dist_bins, len(config.lags)
    values = np.full((L, m1, m2), np.nan)
    n_pairs = np.zeros((m1, m2), dtype=int)
    n_clipped = 0
    one_minus_u = 1.0 - np.asarray(config.u_levels, dtype=float)

    for ki, lag in enumerate(config.lags):
        count, denom = _lag_components(E, V, int(lag))
        if lag == 0:
            num_pair = count[:, iu, ju]
            den_pair = denom[iu, ju]
        else:
            num_pair = count[:, iu, ju] + count[:, ju, iu]
            den_pair = denom[iu, ju] + denom[ju, iu]
        with np.errstate(invalid="ignore", divide="ignore"):
            chi_pair = num_pair / (den_pair[None, :] * one_minus_u[:, None])
        ok = den_pair > 0
        n_clipped += int(np.sum(chi_pair[:, ok] > 1.0))
        chi_pair = np.minimum(chi_pair, 1.0)
        for b in range(m1):
            sel = (bins == b) & ok
            n_pairs[b, ki] = int(sel.sum())
            if n_pairs[b, ki] > 0:
                values[:, b, ki] = chi_pair[:, sel].mean(axis=1)
    return ChiGrid(
        values=values,
        u_levels=tuple(config.u_levels),
        dist_edges=edges,
        lags=tuple(int(k) for k in config.lags),
        n_pairs=n_pairs,
        n_clipped=n_clipped,
    )


def same_site_lag_chi(
    panel: PanelDataset, u_levels: tuple[float, ...], lags: tuple[int, ...]
) -> np.ndarray:
    """(L, n_lags) mean over sites of the same-site chi_hat at each lag >= 1."""
    if any(k < 1 for k in lags):
        raise DomainError("same-site chi needs lags >= 1")
    E, V = _exceedance_cube(panel, u_levels)
    out = np.full((len(u_levels), len(lags)), np.nan)
    one_minus_u = 1.0 - np.asarray(u_levels, dtype=float)
    for ki, lag in enumerate(lags):
        count, denom = _lag_components(E, V, int(lag))
        num = np.einsum("lii->li", count)
        den = np.einsum("ii->i", denom)
        ok = den > 0
        if ok.any():
            chi = np.minimum(num[:, ok] / (den[None, ok] * one_minus_u[:, None]), 1.0)
            out[:, ki] = chi.mean(axis=1)
    return out


# ---------------------------------------------------------------------------
# storm-propagation diagnostic


def nearest_neighbors(coords: np.ndarray, k: int = 4) -> np.ndarray:
    """(n, k) indices of each site's k nearest distinct sites; ties by index."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if n < k + 1:
        raise LayoutError(f"need at least {k + 1} sites for {k} neighbors")
    d = pairwise_distances(coords)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def chi_star(panel: PanelDataset, lag: int, u: float, n_neighbors: int = 4) -> np.ndarray:
    """Per-site Pr(all neighbors exceed at t | site exceeded at t - lag).

    Counts only (year, t) slots where the conditioning cell and all neighbor
    cells are observed. Sites whose conditioning event never occurs get NaN.
    """
    u = _check_u(u)
    lag = int(lag)
    if lag < 0:
        raise DomainError("lag must be nonnegative")
    if lag >= panel.n_days:
        raise LayoutError(f"lag {lag} does not fit in a year of length {panel.n_days}")
    nb = nearest_neighbors(panel.coords, n_neighbors)
    E, V = _exceedance_cube(panel, (u,))
    Eb = E[0].astype(bool)
    Vb = V.astype(bool)
    n = panel.n_sites
    T = panel.n_days
    out = np.full(n, np.nan)
    for i in range(n):
        cond = Eb[:, : T - lag if lag else T, i]
        cond_valid = Vb[:, : T - lag if lag else T, i]
        nb_slice = slice(lag, T) if lag else slice(0, T)
        nb_exceed = Eb[:, nb_slice, :][:, :, nb[i]].all(axis=2)
        nb_valid = Vb[:, nb_slice, :][:, :, nb[i]].all(axis=2)
        ok = cond_valid & nb_valid
        den = int(np.sum(cond & ok))
        if den > 0:
            num = int(np.sum(cond & ok & nb_exceed))
            out[i] = num / den
    return out


def rmse_chi_star(empirical: np.ndarray, simulated: np.ndarray) -> float:
    """Mean over sites of sqrt(mean over draws of (p_tilde - p_hat)^2).

    empirical is (n,), simulated is (B, n); sites where either side is all
    NaN are dropped.
    """
    empirical = np.asarray(empirical, dtype=float)
    simulated = np.asarray(simulated, dtype=float)
    if simulated.ndim != 2 or simulated.shape[1] != empirical.shape[0]:
        raise LayoutError("simulated must be (B, n_sites)")
    per_site = []
    for i in range(empirical.size):
        if np.isnan(empirical[i]):
            continue
        draws = simulated[:, i]
        draws = draws[~np.isnan(draws)]
        if draws.size == 0:
            continue
        per_site.append(float(np.sqrt(np.mean((draws - empirical[i]) ** 2))))
    if not per_site:
        raise DomainError("no site has both an empirical value and simulated draws")
    return float(np.mean(per_site))


# ---------------------------------------------------------------------------
# Monte Carlo verification of the dependence classification


@dataclass(frozen=True)
class ClassificationReport:
    """chi_hat ladder at increasing levels with the AD/AI verdict for one mode."""

    mode: str
    distance: float
    lag: float
    u_levels: tuple[float, ...]
    chi: np.ndarray
    se: np.ndarray
    eta_slope: float
    verdict: str
    expected: str
    match: bool
    n_pairs: int


def verify_dependence_class(
    spec: CopulaSpec,
    mode: str,
    *,
    distance: float = None,
    lag: float = 1.0,
    u_levels: tuple[float, ...] = (0.95, 0.99, 0.999),
    n_pairs: int = 1_000_000,
    seed: int = 0,
) -> ClassificationReport:
    """Simulate pair replicates and check the limiting-class verdict.

    The verdict is AD when chi_hat at the top level stays above both twice its
    Monte Carlo standard error and an absolute floor of 0.01, and has not
    fallen below half its value at the lowest level; otherwise AI. The report
    carries the Pickands-style slope estimate from regressing log chi_hat on
    log(1 - u). Budgets below 500 expected marginal exceedances at the top
    level raise PrecisionError.
    """
    u_levels = tuple(sorted(float(u) for u in u_levels))
    for u in u_levels:
        _check_u(u)
    u_max = u_levels[-1]
    if n_pairs * (1.0 - u_max) < 500:
        raise PrecisionError(
            f"budget {n_pairs} is too small to resolve u = {u_max}; joint counts would be unreliable"
        )
    if distance is None:
        distance = spec.psi1  # pair at spatial correlation 1/2
    pairs = simulate_pair_uniforms(spec, mode, distance, lag, int(n_pairs), seed)
    chi = np.empty(len(u_levels))
    se = np.empty(len(u_levels))
    for li, u in enumerate(u_levels):
        joint = float(np.sum((pairs[:, 0] > u) & (pairs[:, 1] > u)))
        p_joint = joint / n_pairs
        chi[li] = p_joint / (1.0 - u)
        se[li] = np.sqrt(max(p_joint * (1.0 - p_joint), 1e-300) / n_pairs) / (1.0 - u)
    positive = chi > 0
    if positive.sum() >= 2:
        slope = np.polyfit(np.log1p(-np.asarray(u_levels)[positive]), np.log(chi[positive]), 1)[0]
    else:
        slope = float("nan")
    is_ad = bool(chi[-1] > max(2.0 * se[-1], 0.01) and chi[-1] >= chi[0] / 2.0)
    verdict = "AD" if is_ad else "AI"
    cls = classify_dependence(spec)
    expected = {"space": cls.in_space, "time": cls.in_time, "space_time": cls.in_space_time}[mode]
    return ClassificationReport(
        mode=mode,
        distance=float(distance),
        lag=float(lag),
        u_levels=u_levels,
        chi=chi,
        se=se,
        eta_slope=float(slope),
        verdict=verdict,
        expected=expected,
        match=verdict == expected,
        n_pairs=int(n_pairs),
    )


# ---------------------------------------------------------------------------
# uncertainty bands for empirical curves


def year_block_bootstrap(panel: PanelDataset, stat_fn, B: int, seed: int) -> np.ndarray:
    """Stack stat_fn over B panels with years resampled with replacement.

    Years are the independent blocks, so resampling them preserves all
    within-year dependence. stat_fn maps a PanelDataset to an ndarray.
    """
    if B < 1:
        raise DomainError("B must be >= 1")
    out = []
    for b in range(B):
        rng = substream(derive_seed(seed, b), 11)
        idx = rng.integers(0, panel.n_years, size=panel.n_years)
        out.append(np.asarray(stat_fn(panel.subset_years(idx)), dtype=float))
    return np.stack(out, axis=0)
