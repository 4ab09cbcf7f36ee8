"""Maximum-likelihood estimation of a single latent trait.

The same machinery serves propensity windows and 2PL capability items:
the clamped log-likelihood is scanned on a grid, the best grid points are
refined with a bracketed Newton iteration on the analytic score, and the
standard error comes from the observed information.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import EmptyData, NonFinite
from .model import CapabilityItem, Item, ItemArrays, PropensityWindow


@dataclass(frozen=True)
class OutcomeRecord:
    item_id: Hashable
    y: int

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.y!r}")


@dataclass(frozen=True)
class FitConfig:
    theta_min: float = -10.0
    theta_max: float = 10.0
    grid_step: float = 0.05
    tolerance: float = 1e-8
    max_iterations: int = 200
    clamp_eps: float = 1e-12

    def __post_init__(self):
        if not self.theta_min < self.theta_max:
            raise ValueError("theta bounds must satisfy theta_min < theta_max")
        if self.grid_step <= 0 or self.tolerance <= 0 or self.clamp_eps <= 0:
            raise ValueError("grid_step, tolerance and clamp_eps must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class FitResult:
    theta_hat: float
    std_error: Optional[float]
    log_likelihood: float
    n_items: int
    converged: bool
    init_theta: float
    at_boundary: bool = False
    iterations: int = 0


Outcomes = Union[Sequence[OutcomeRecord], Sequence[int], np.ndarray]

# Candidates refined after the grid scan; guards against multi-modal likelihoods.
_N_CANDIDATES = 5


def responses(outcomes: Outcomes) -> np.ndarray:
    """Outcome records (or bare 0/1 values) as a float array."""
    ys = np.array([o.y if isinstance(o, OutcomeRecord) else o for o in outcomes], dtype=float)
    if ys.size and not np.all((ys == 0) | (ys == 1)):
        raise ValueError("outcomes must be 0 or 1")
    return ys


def align(bank: Mapping[Hashable, Item], records: Sequence[OutcomeRecord]):
    """Resolve outcome records against an item bank; returns ``(items, y)``."""
    items = []
    for rec in records:
        try:
            items.append(bank[rec.item_id])
        except KeyError:
            raise KeyError(f"outcome refers to unknown item id {rec.item_id!r}") from None
    return items, responses(records)


class LogLikelihood:
    """Vectorised clamped Bernoulli log-likelihood over a fixed dataset."""

    def __init__(self, items: Sequence[Item], outcomes: Outcomes, clamp_eps: float = 1e-12):
        if len(items) == 0:
            raise EmptyData("no items to fit")
        y = responses(outcomes)
        if len(y) != len(items):
            raise ValueError(f"{len(items)} items but {len(y)} outcomes")
        self.items = list(items)
        self.arrays = ItemArrays.from_items(self.items)
        self.y = y
        self.eps = clamp_eps

    # theta values times items per vectorised block, to bound memory
    _BLOCK = 2_000_000

    def __call__(self, theta):
        t = np.asarray(theta, dtype=float)
        flat = t.reshape(-1)
        block = max(1, self._BLOCK // len(self.y))
        ll = np.concatenate([self._eval(flat[i:i + block]) for i in range(0, flat.size, block)]) \
            if flat.size else np.empty(0)
        if np.any(np.isnan(ll)):
            raise NonFinite("log-likelihood is NaN")
        return float(ll[0]) if t.ndim == 0 else ll.reshape(t.shape)

    def _eval(self, theta: np.ndarray) -> np.ndarray:
        p = np.clip(self.arrays.prob(theta), self.eps, 1.0 - self.eps)
        return np.sum(self.y * np.log(p) + (1.0 - self.y) * np.log1p(-p), axis=-1)

    @property
    def monotone(self) -> bool:
        """True when some item has an infinite bound (2PL-like tail)."""
        return bool(np.any(np.isinf(self.arrays.lower)) or np.any(np.isinf(self.arrays.upper)))

    def grid(self, config: FitConfig) -> np.ndarray:
        if self.monotone:
            lo, hi = config.theta_min, config.theta_max
        else:
            lo = max(config.theta_min, float(np.min(self.arrays.lower)) - 2.0)
            hi = min(config.theta_max, float(np.max(self.arrays.upper)) + 2.0)
            if lo > hi:
                # every window lies outside the search bounds
                lo, hi = config.theta_min, config.theta_max
        n = int(math.floor((hi - lo) / config.grid_step + 1e-9))
        g = lo + config.grid_step * np.arange(n + 1)
        if hi - g[-1] > 1e-9 * config.grid_step:
            g = np.append(g, hi)
        return g

    def score(self, theta: float) -> float:
        """Analytic derivative of the clamped log-likelihood."""
        arr = self.arrays
        z_l = arr.slope * (theta - arr.lower)
        z_u = arr.slope * (arr.upper - theta)
        p = arr.norm * expit(z_l) * expit(z_u)
        dlogp = arr.slope * (expit(-z_l) - expit(-z_u))
        live = (p > self.eps) & (p < 1.0 - self.eps)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(self.y == 1, dlogp, -dlogp * p / (1.0 - p))
        return float(np.sum(np.where(live, term, 0.0)))

    def curvature(self, theta: float, h: Optional[float] = None) -> float:
        """Central difference of the analytic score."""
        if h is None:
            h = 1e-6 * max(1.0, abs(theta))
        return (self.score(theta + h) - self.score(theta - h)) / (2.0 * h)


def log_likelihood(theta, items: Sequence[Item], outcomes: Outcomes,
                   config: FitConfig = FitConfig()):
    return LogLikelihood(items, outcomes, config.clamp_eps)(theta)


def initialize_theta(items: Sequence[Item], outcomes: Outcomes,
                     config: FitConfig = FitConfig()) -> float:
    """Grid argmax of the log-likelihood; ties go to the smallest theta."""
    ll = LogLikelihood(items, outcomes, config.clamp_eps)
    g = ll.grid(config)
    return float(g[int(np.argmax(ll(g)))])


def _newton(ll: LogLikelihood, start: float, a: float, b: float, config: FitConfig):
    """Safeguarded Newton on the score over a bracket with score(a) > 0 > score(b)."""
    x = min(max(start, a), b)
    for it in range(1, config.max_iterations + 1):
        d1 = ll.score(x)
        if d1 == 0.0:
            return x, True, it
        if d1 > 0:
            a = x
        else:
            b = x
        d2 = ll.curvature(x)
        x_new = x - d1 / d2 if d2 < 0 else math.nan
        if not (a < x_new < b):
            x_new = 0.5 * (a + b)
        if abs(x_new - x) < config.tolerance or b - a < config.tolerance:
            return x_new, True, it
        x = x_new
    return x, False, config.max_iterations


def _walk(ll: LogLikelihood, x: float, direction: float, config: FitConfig):
    """Follow an outward-pointing score from the edge of the scanned range.

    Steps double until the score changes sign (then Newton on the last
    bracket) or a search bound is reached.
    """
    bound = config.theta_max if direction > 0 else config.theta_min
    if x == bound:
        return x, True, 0
    step = config.grid_step
    for it in range(1, config.max_iterations + 1):
        nxt = min(max(x + direction * step, config.theta_min), config.theta_max)
        d = ll.score(nxt)
        if d == 0.0:
            return nxt, True, it
        if d * direction < 0:
            a, b = (x, nxt) if direction > 0 else (nxt, x)
            theta, ok, n_it = _newton(ll, 0.5 * (a + b), a, b, config)
            return theta, ok, it + n_it
        if nxt == bound:
            return nxt, True, it
        x = nxt
        step *= 2.0
    return x, False, config.max_iterations


# Sub-grid used when a bracket's end scores do not straddle a maximum.
_SUBDIVISIONS = 32
_MAX_DEPTH = 8


def _refine(ll: LogLikelihood, start: float, lo: float, hi: float, config: FitConfig, depth: int = 0):
    """Local maximiser inside ``[lo, hi]``; returns ``(theta, converged, iterations)``.

    Newton runs when the score changes sign across the bracket. Otherwise the
    peak is narrower than the bracket (a sharp ridge between nearby window
    edges), so the bracket is rescanned on a finer grid and the search recurses.
    """
    d_lo = ll.score(lo)
    d_hi = ll.score(hi)
    if d_lo > 0 and d_hi < 0:
        theta, ok, n_it = _newton(ll, start, lo, hi, config)
        if ll(theta) >= ll(start):
            return theta, ok, n_it
    if depth >= _MAX_DEPTH or hi - lo <= config.tolerance:
        return start, True, 0
    pts = np.linspace(lo, hi, _SUBDIVISIONS + 1)
    j = int(np.argmax(ll(pts)))
    a, b = pts[max(j - 1, 0)], pts[min(j + 1, _SUBDIVISIONS)]
    theta, ok, n_it = _refine(ll, float(pts[j]), float(a), float(b), config, depth + 1)
    return theta, ok, n_it + 1


def _scan_points(ll: LogLikelihood, config: FitConfig) -> np.ndarray:
    """Regular grid plus the bounds of two-sided windows, densified by midpoints.

    Sharp likelihood ridges only form between nearby window edges, so the
    bounds of two-sided windows are where the regular grid can miss a peak.
    """
    g = ll.grid(config)
    arr = ll.arrays
    two_sided = np.isfinite(arr.lower) & np.isfinite(arr.upper)
    knots = np.concatenate((arr.lower[two_sided], arr.upper[two_sided]))
    knots = knots[(knots >= g[0]) & (knots <= g[-1])]
    pts = np.unique(np.concatenate((g, knots)))
    if pts.size > 1:
        pts = np.unique(np.concatenate((pts, 0.5 * (pts[:-1] + pts[1:]))))
    return pts


def _fit(items: Sequence[Item], outcomes: Outcomes, config: FitConfig) -> FitResult:
    ll = LogLikelihood(items, outcomes, config.clamp_eps)
    g = ll.grid(config)
    init = float(g[int(np.argmax(ll(g)))])

    pts = _scan_points(ll, config)
    vals = ll(pts)
    # local maxima of the scan, best first, ties resolved toward smaller theta
    left = np.concatenate(([-np.inf], vals[:-1]))
    right = np.concatenate((vals[1:], [-np.inf]))
    peaks = np.flatnonzero((vals >= left) & (vals >= right))
    order = peaks[np.lexsort((pts[peaks], -vals[peaks]))][:_N_CANDIDATES]

    best = None
    total_iter = 0
    last = pts.size - 1
    for idx in order:
        x = float(pts[idx])
        if idx in (0, last):
            direction = -1.0 if idx == 0 else 1.0
            if last == 0 or ll.score(x) * direction > 0:
                theta, ok, n_it = _walk(ll, x, direction, config)
            else:
                nb = pts[1] if idx == 0 else pts[last - 1]
                theta, ok, n_it = _refine(ll, x, float(min(x, nb)), float(max(x, nb)), config)
        else:
            theta, ok, n_it = _refine(ll, x, float(pts[idx - 1]), float(pts[idx + 1]), config)
        total_iter += n_it
        value = ll(theta)
        if best is None or value > best[1] or (value == best[1] and theta < best[0]):
            best = (theta, value, ok)

    theta, value, converged = best
    info = -ll.curvature(theta)
    se = 1.0 / math.sqrt(info) if info > 0 and math.isfinite(info) else None
    edge = config.tolerance * max(1.0, abs(theta))
    at_boundary = (theta - config.theta_min <= edge) or (config.theta_max - theta <= edge)
    return FitResult(
        theta_hat=float(theta),
        std_error=se,
        log_likelihood=float(value),
        n_items=len(ll.items),
        converged=bool(converged),
        init_theta=init,
        at_boundary=bool(at_boundary),
        iterations=total_iter,
    )


def fit(items: Sequence[Item], outcomes: Outcomes, config: FitConfig = FitConfig()) -> FitResult:
    """Fit a latent trait to any mix of capability and propensity items."""
    return _fit(items, outcomes, config)


def fit_propensity(items: Sequence[PropensityWindow], outcomes: Outcomes,
                   config: FitConfig = FitConfig()) -> FitResult:
    if not all(isinstance(i, PropensityWindow) for i in items):
        raise TypeError("fit_propensity expects PropensityWindow items")
    return _fit(items, outcomes, config)


def fit_capability(items: Sequence[CapabilityItem], outcomes: Outcomes,
                   config: FitConfig = FitConfig()) -> FitResult:
    if not all(isinstance(i, CapabilityItem) for i in items):
        raise TypeError("fit_capability expects CapabilityItem items")
    return _fit(items, outcomes, config)


# --- empirical summaries --------------------------------------------------

def empirical_point_collapse(items: Sequence[PropensityWindow], outcomes: Outcomes,
                             x: float) -> Optional[float]:
    """Mean outcome over windows containing ``x``; ``None`` when none do."""
    y = responses(outcomes)
    cover = np.array([w.lower <= x <= w.upper for w in items], dtype=bool)
    if not cover.any():
        return None
    return float(y[cover].mean())


def collapse_curve(items: Sequence[PropensityWindow], outcomes: Outcomes, xs):
    """Vectorised pointwise collapse: ``(rate, n_cover)`` with NaN for empty cover."""
    y = responses(outcomes)
    lower = np.array([w.lower for w in items])
    upper = np.array([w.upper for w in items])
    xs = np.asarray(xs, dtype=float)
    cover = (lower <= xs[:, None]) & (xs[:, None] <= upper)
    n = cover.sum(axis=1)
    hits = cover @ y
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(n > 0, hits / np.maximum(n, 1), np.nan)
    return rate, n


def collapse_argmax(items: Sequence[PropensityWindow], outcomes: Outcomes, xs,
                    min_cover: int = 1) -> float:
    """Location of the collapse curve's peak (smallest x on ties).

    Points covered by fewer than ``min_cover`` windows are ignored; near the
    edges of the window support a handful of windows can produce spurious
    rates of 1.
    """
    xs = np.asarray(xs, dtype=float)
    rate, n = collapse_curve(items, outcomes, xs)
    rate = np.where(n >= min_cover, rate, np.nan)
    if np.all(np.isnan(rate)):
        raise EmptyData("no query point reaches the required window coverage")
    return float(xs[int(np.nanargmax(rate))])


def empirical_surface(items: Sequence[PropensityWindow], outcomes: Outcomes) -> dict:
    """Success rate per distinct ``(lower, upper)`` window, sorted by key."""
    y = responses(outcomes)
    groups = defaultdict(list)
    for w, yi in zip(items, y):
        groups[(w.lower, w.upper)].append(yi)
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def empirical_icc(items: Sequence[CapabilityItem], outcomes: Outcomes) -> dict:
    """Success rate per distinct difficulty, sorted by difficulty."""
    y = responses(outcomes)
    groups = defaultdict(list)
    for item, yi in zip(items, y):
        groups[item.b].append(yi)
    return {b: float(np.mean(v)) for b, v in sorted(groups.items())}
