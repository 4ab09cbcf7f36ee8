"""Response curves for capability (2PL) and propensity (two-sided 2x2PL) items.

Everything here is a pure function of immutable inputs. Functions accept a
scalar or an array of ``theta`` values and return the same shape (a Python
float for scalar input).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import DegenerateWindow, OneSidedWindow

# Smallest accepted window radius for the normalised curve.
R_MIN = 1e-6
# Cap on the adjusted slope; keeps exp(1/r) from overflowing for narrow windows.
A_MAX = 1e8

ArrayLike = Union[float, Sequence[float], np.ndarray]


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def sigmoid(x: ArrayLike):
    """Logistic function ``1 / (1 + exp(-x))``, stable for large ``|x|``."""
    return _out(expit(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class CapabilityItem:
    """Monotone 2PL item with difficulty ``b`` and discrimination ``a``."""

    b: float
    a: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.b):
            raise ValueError(f"difficulty must be finite, got {self.b}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValueError(f"discrimination must be positive and finite, got {self.a}")


@dataclass(frozen=True)
class PropensityWindow:
    """Demand interval ``[lower, upper]`` of a propensity item.

    Either bound (but not both) may be infinite, which makes the window
    one-sided: it then behaves exactly like a 2PL item on its finite bound.
    """

    lower: float
    upper: float
    a: float = 1.0

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("window bounds must not be NaN")
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        if math.isinf(self.lower) and math.isinf(self.upper):
            raise ValueError("at least one window bound must be finite")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValueError(f"discrimination must be positive and finite, got {self.a}")

    @property
    def is_one_sided(self) -> bool:
        return math.isinf(self.lower) or math.isinf(self.upper)

    @property
    def radius(self) -> float:
        return (self.upper - self.lower) / 2.0

    @property
    def midpoint(self) -> float:
        if self.is_one_sided:
            return math.nan
        return (self.lower + self.upper) / 2.0

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


@dataclass(frozen=True)
class ResponseParams:
    adjusted_slope: float
    normalization: float


def adjusted_slope(a: float, r: float) -> float:
    """``a + exp(1/r) - 1``, capped at ``A_MAX`` (or ``a`` when ``a`` is larger)."""
    cap = max(A_MAX, a)
    inv = 1.0 / r
    if inv > math.log(cap):
        return cap
    return min(a + math.expm1(inv), cap)


def derive_params(window: PropensityWindow) -> ResponseParams:
    """Adjusted slope and midpoint normalisation for a finite window."""
    if window.is_one_sided:
        raise OneSidedWindow(f"window [{window.lower}, {window.upper}] has an infinite bound")
    r = window.radius
    if r < R_MIN:
        raise DegenerateWindow(f"window radius {r!r} is below the minimum {R_MIN}")
    slope = adjusted_slope(window.a, r)
    s = float(expit(slope * r))
    return ResponseParams(adjusted_slope=slope, normalization=1.0 / (s * s))


def p_capability(theta: ArrayLike, item: CapabilityItem):
    theta = np.asarray(theta, dtype=float)
    return _out(expit(item.a * (theta - item.b)))


def p_propensity_unnormalized(theta: ArrayLike, window: PropensityWindow,
                              slope_lower: float, slope_upper: float):
    """Plain product of the rising and falling logistic factors."""
    if slope_lower <= 0 or slope_upper <= 0:
        raise ValueError("slopes must be positive")
    theta = np.asarray(theta, dtype=float)
    rise = expit(slope_lower * (theta - window.lower))
    fall = expit(slope_upper * (window.upper - theta))
    return _out(rise * fall)


def _one_sided(theta: np.ndarray, window: PropensityWindow):
    if math.isinf(window.upper):
        return expit(window.a * (theta - window.lower))
    return expit(window.a * (window.upper - theta))


def p_propensity(theta: ArrayLike, window: PropensityWindow):
    """Normalised two-sided response curve; equals 1 at the window midpoint.

    One-sided windows use the 2PL curve on the finite bound with the base
    slope, which is the exact limit of the normalised curve.
    """
    theta = np.asarray(theta, dtype=float)
    if window.is_one_sided:
        return _out(_one_sided(theta, window))
    params = derive_params(window)
    k = params.adjusted_slope
    p = params.normalization * expit(k * (theta - window.lower)) * expit(k * (window.upper - theta))
    return _out(p)


def p_propensity_naive(theta: ArrayLike, window: PropensityWindow):
    """Midpoint-normalised curve without slope adjustment (plotting baseline)."""
    theta = np.asarray(theta, dtype=float)
    if window.is_one_sided:
        return _out(_one_sided(theta, window))
    a = window.a
    s = expit(a * window.radius)
    return _out(expit(a * (theta - window.lower)) * expit(a * (window.upper - theta)) / (s * s))


def boundary_probability_from_product(x: float) -> float:
    """Boundary success probability as a function of ``a' * r``."""
    s = float(expit(x))
    q = float(expit(-x))
    return 1.0 / (2.0 * (s * s + q * q))


def boundary_probability(window: PropensityWindow) -> float:
    """Success probability at either bound of a finite window."""
    params = derive_params(window)
    return boundary_probability_from_product(params.adjusted_slope * window.radius)


Item = Union[CapabilityItem, PropensityWindow]


def item_probability(theta: ArrayLike, item: Item):
    if isinstance(item, CapabilityItem):
        return p_capability(theta, item)
    return p_propensity(theta, item)


@dataclass(frozen=True)
class ItemArrays:
    """Column-wise parameters of an item bank for vectorised evaluation.

    Every item is written as ``norm * sigmoid(slope*(theta-lower)) *
    sigmoid(slope*(upper-theta))``; capability and one-sided items carry an
    infinite bound and ``norm == 1``.
    """

    lower: np.ndarray
    upper: np.ndarray
    slope: np.ndarray
    norm: np.ndarray

    @classmethod
    def from_items(cls, items: Sequence[Item]) -> "ItemArrays":
        n = len(items)
        lower = np.empty(n)
        upper = np.empty(n)
        slope = np.empty(n)
        norm = np.ones(n)
        for i, item in enumerate(items):
            if isinstance(item, CapabilityItem):
                lower[i], upper[i], slope[i] = item.b, math.inf, item.a
            elif item.is_one_sided:
                lower[i], upper[i], slope[i] = item.lower, item.upper, item.a
            else:
                params = derive_params(item)
                lower[i], upper[i] = item.lower, item.upper
                slope[i], norm[i] = params.adjusted_slope, params.normalization
        return cls(lower, upper, slope, norm)

    def __len__(self) -> int:
        return len(self.lower)

    def prob(self, theta: ArrayLike) -> np.ndarray:
        """Probabilities with shape ``theta.shape + (n_items,)``."""
        t = np.asarray(theta, dtype=float)[..., None]
        return self.norm * expit(self.slope * (t - self.lower)) * expit(self.slope * (self.upper - t))
