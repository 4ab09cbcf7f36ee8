"""Synthetic agents, window banks and parameter-recovery experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import model
from .errors import SamplingError
from .estimation import (
    FitConfig,
    FitResult,
    OutcomeRecord,
    collapse_argmax,
    fit_propensity,
)
from .model import CapabilityItem, PropensityWindow


@dataclass(frozen=True)
class SyntheticAgent:
    true_theta: float
    label: str = "synthetic"

    def __post_init__(self):
        if not math.isfinite(self.true_theta):
            raise ValueError("true_theta must be finite")


@dataclass(frozen=True)
class WindowDistribution:
    support: tuple = (-5.0, 5.0)
    scheme: str = "uniform-pair-sorted"
    count: int = 1000
    seed: int = 0
    a: float = 1.0
    fixed: Optional[tuple] = None  # ((lower, upper), ...) for the fixed-list scheme
    max_attempts: int = 10_000

    def __post_init__(self):
        lo, hi = self.support
        if not lo < hi:
            raise ValueError("support must be a non-degenerate interval")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.scheme not in ("uniform-pair-sorted", "fixed-list"):
            raise ValueError(f"unknown window scheme {self.scheme!r}")
        if self.scheme == "fixed-list" and not self.fixed:
            raise ValueError("fixed-list scheme needs a list of windows")


def sample_windows(dist: WindowDistribution) -> List[PropensityWindow]:
    """Draw a window bank.

    ``uniform-pair-sorted`` draws two iid uniforms on the support, sorts them
    into ``(lower, upper)`` and rejects pairs narrower than the minimum radius.
    ``fixed-list`` cycles through ``dist.fixed`` until ``count`` windows exist.
    """
    if dist.scheme == "fixed-list":
        pairs = [dist.fixed[i % len(dist.fixed)] for i in range(dist.count)]
        return [PropensityWindow(float(lo), float(hi), dist.a) for lo, hi in pairs]

    rng = np.random.default_rng(dist.seed)
    lo, hi = dist.support
    out: List[PropensityWindow] = []
    attempts = 0
    while len(out) < dist.count:
        need = dist.count - len(out)
        if attempts >= dist.max_attempts:
            raise SamplingError(
                f"only {len(out)} of {dist.count} windows after {attempts} draws; "
                f"support {dist.support} is too narrow for radius >= {model.R_MIN}"
            )
        batch = min(need, dist.max_attempts - attempts)
        pairs = np.sort(rng.uniform(lo, hi, size=(batch, 2)), axis=1)
        attempts += batch
        ok = (pairs[:, 1] - pairs[:, 0]) / 2.0 >= model.R_MIN
        out.extend(PropensityWindow(float(l), float(u), dist.a) for l, u in pairs[ok])
    return out


def simulate_outcomes(agent: SyntheticAgent, items: Sequence, seed: int,
                      item_ids: Optional[Sequence] = None) -> List[OutcomeRecord]:
    """Bernoulli outcomes at the agent's true trait. Ids default to positions."""
    rng = np.random.default_rng(seed)
    p = np.array([model.item_probability(agent.true_theta, it) for it in items], dtype=float)
    y = (rng.random(len(p)) < p).astype(int)
    ids = range(len(items)) if item_ids is None else item_ids
    return [OutcomeRecord(i, int(v)) for i, v in zip(ids, y)]


def capability_bank(difficulties: Sequence[float], n: int, a: float = 1.0) -> List[CapabilityItem]:
    """``n`` items cycling through the given difficulties."""
    return [CapabilityItem(float(difficulties[i % len(difficulties)]), a) for i in range(n)]


# --- recovery experiments -------------------------------------------------

@dataclass(frozen=True)
class SeedResult:
    seed: int
    fit: FitResult
    collapse_peak: float


@dataclass(frozen=True)
class RecoverySummary:
    true_theta: float
    median_abs_error_mle: float
    median_abs_error_collapse: float
    per_seed: tuple = field(default_factory=tuple)


def collapse_min_cover(n_items: int) -> int:
    """Coverage floor for the collapse peak: 5% of the bank, at least one."""
    return max(1, int(math.ceil(0.05 * n_items)))


def recovery_experiment(true_theta: float, dist: WindowDistribution,
                        config: FitConfig = FitConfig(), n_seeds: int = 20,
                        collapse_step: float = 0.01) -> RecoverySummary:
    """Sample, simulate, fit and collapse once per seed ``dist.seed + k``."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    agent = SyntheticAgent(true_theta)
    lo, hi = dist.support
    xs = lo + collapse_step * np.arange(int(round((hi - lo) / collapse_step)) + 1)
    rows = []
    for k in range(n_seeds):
        seed = dist.seed + k
        windows = sample_windows(_with_seed(dist, seed))
        records = simulate_outcomes(agent, windows, seed=10_000 + seed)
        result = fit_propensity(windows, records, config)
        peak = collapse_argmax(windows, records, xs, min_cover=collapse_min_cover(len(windows)))
        rows.append(SeedResult(seed, result, peak))
    mle_err = [abs(r.fit.theta_hat - true_theta) for r in rows]
    col_err = [abs(r.collapse_peak - true_theta) for r in rows]
    return RecoverySummary(
        true_theta=true_theta,
        median_abs_error_mle=float(np.median(mle_err)),
        median_abs_error_collapse=float(np.median(col_err)),
        per_seed=tuple(rows),
    )


def _with_seed(dist: WindowDistribution, seed: int) -> WindowDistribution:
    return WindowDistribution(dist.support, dist.scheme, dist.count, seed, dist.a,
                              dist.fixed, dist.max_attempts)


# --- theorem validation ---------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    worst_deviation: float
    tolerance: float
    detail: str = ""


def _check(name: str, deviation: float, tol: float, detail: str = "") -> Check:
    return Check(name, bool(deviation <= tol), float(deviation), tol, detail)


def validate_theorems(curve: Callable = None, seed: int = 0) -> List[Check]:
    """Numerically verify the closed-form properties of the response curves.

    ``curve`` replaces ``model.p_propensity`` for fault injection in tests.
    Failures are reported in the returned list, never raised.
    """
    p = curve or model.p_propensity
    rng = np.random.default_rng(seed)
    checks: List[Check] = []
    r_grid = np.unique(np.concatenate([10.0 ** np.arange(-3, 4), np.logspace(-3, 3, 100)]))

    # midpoint normalisation over random windows and slopes
    lows = rng.uniform(-10, 10, 2000)
    radii = np.exp(rng.uniform(math.log(model.R_MIN), math.log(1e3), 2000))
    slopes = np.exp(rng.uniform(math.log(0.1), math.log(10), 2000))
    dev = 0.0
    for l, r, a in zip(lows, radii, slopes):
        w = PropensityWindow(l, l + 2 * r, a)
        dev = max(dev, abs(p(w.midpoint, w) - 1.0))
    checks.append(_check("midpoint_equals_one", dev, 1e-12))

    # boundary formula identity at both bounds
    dev = 0.0
    for l, r, a in zip(lows[:500], radii[:500], slopes[:500]):
        w = PropensityWindow(l, l + 2 * r, a)
        pb = model.boundary_probability(w)
        dev = max(dev, abs(p(w.lower, w) - pb), abs(p(w.upper, w) - pb))
    checks.append(_check("boundary_formula_identity", dev, 1e-12))

    def pb(r, a=1.0):
        return model.boundary_probability(PropensityWindow(0.0, 2.0 * r, a))

    checks.append(_check("limit_r_to_zero", abs(pb(1e-3) - 0.5), 1e-6, "a=1, r=1e-3"))
    checks.append(_check("limit_r_to_infinity", abs(pb(1e3) - 0.5), 1e-6, "a=1, r=1e3"))

    values = np.array([pb(r) for r in r_grid])
    below = max(0.0, 0.5 - values.min())
    above = max(0.0, values.max() - 0.5658)
    checks.append(_check("uniform_bound_a1", max(below, above), 0.0,
                         f"range [{values.min():.6f}, {values.max():.6f}]"))
    sharp = model.boundary_probability_from_product(math.e)
    checks.append(_check("uniform_bound_peak_at_r1", abs(pb(1.0) - sharp) + max(0.0, values.max() - sharp),
                         1e-12, f"P(r=1)={pb(1.0):.6f}"))

    dev = 0.0
    for r in np.linspace(10, 100, 181):
        approx = 0.5 + math.exp(-r - 1.0) * (1.0 - 1.0 / (2.0 * r))
        dev = max(dev, abs(pb(r) - approx))
    checks.append(_check("expansion_large_r", dev, 1e-8, "a=1, r in [10, 100]"))

    dev = 0.0
    for r in np.logspace(-3, 3, 200):
        for a in (0.1, 1.0, 10.0):
            x = model.adjusted_slope(a, r) * r
            if x >= 20:
                dev = max(dev, abs(pb(r, a) - (0.5 + math.exp(-x))))
    checks.append(_check("expansion_small_r", dev, 1e-8, "all a'r >= 20"))

    dev = 0.0
    for a in (0.5, 1.0, 2.0, 5.0):
        w = PropensityWindow(0.0, 1e6, a)
        thetas = np.linspace(-10, 10, 2001)
        ref = model.p_capability(thetas, CapabilityItem(0.0, a))
        dev = max(dev, float(np.max(np.abs(np.asarray(p(thetas, w)) - ref))))
    checks.append(_check("reduction_normalized", dev, 1e-6, "b_u = 1e6"))

    dev = 0.0
    for a in (0.5, 1.0, 2.0, 5.0):
        thetas = np.linspace(-10, 10, 2001)
        ref = model.p_capability(thetas, CapabilityItem(0.0, a))
        hi = model.p_propensity_unnormalized(thetas, PropensityWindow(0.0, 1e6), a, a)
        lo_side = model.p_propensity_unnormalized(-thetas, PropensityWindow(-1e6, 0.0), a, a)
        dev = max(dev, float(np.max(np.abs(hi - ref))), float(np.max(np.abs(lo_side - ref))))
    checks.append(_check("reduction_unnormalized", dev, 1e-6, "b_u = 1e6 and b_l = -1e6"))

    # float spacing of theta times the adjusted slope bounds how symmetric the
    # computed curve can be, so these two checks use radii >= 0.25 (slope <= ~65)
    dev = 0.0
    mono = 0.0
    wide = np.exp(rng.uniform(math.log(0.25), math.log(1e3), 200))
    for l, r, a in zip(lows[:200], wide, slopes[:200]):
        w = PropensityWindow(l, l + 2 * r, a)
        d = np.linspace(0, 3 * r + 5, 400)
        dev = max(dev, float(np.max(np.abs(np.asarray(p(w.midpoint + d, w)) - np.asarray(p(w.midpoint - d, w))))))
        right = np.asarray(p(w.midpoint + d, w))
        left = np.asarray(p(w.midpoint - d, w))
        mono = max(mono, float(np.max(np.diff(right), initial=0.0)), float(np.max(np.diff(left), initial=0.0)))
    checks.append(_check("symmetry_about_midpoint", dev, 1e-12))
    checks.append(_check("unimodal_hill", mono, 1e-12, "max increase moving away from m"))
    return checks
