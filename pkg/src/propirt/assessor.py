"""Instance-level success prediction from demand features.

Random-forest assessors are trained on capability demands alone or on
capabilities plus propensity-window features, and compared by
cross-validated AUROC on identical folds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier

from .errors import DegenerateFold, DimensionMismatch, MalformedInstance, SingleClass
from .model import PropensityWindow

N_CAPABILITIES = 18
CAPABILITY_DIMENSIONS = (
    "AS", "CEc", "CEe", "CL", "MCr", "MCt", "MCu", "MS", "QLl",
    "QLq", "SNs", "KNa", "KNc", "KNf", "KNn", "KNs", "AT", "VO",
)
PROPENSITY_DIMENSIONS = ("red_vs_blue", "risk", "introversion", "ultracrepidarianism")
ULTRACREP = PROPENSITY_DIMENSIONS.index("ultracrepidarianism")

FEATURE_SETS = ("caps_only", "caps_plus_ultracrep", "caps_plus_all")


@dataclass(frozen=True)
class InstanceFeatures:
    capability_demands: Tuple[float, ...]
    propensity_windows: Tuple[PropensityWindow, ...]
    y: int
    id: str = ""

    def __post_init__(self):
        if len(self.capability_demands) != N_CAPABILITIES:
            raise MalformedInstance(
                f"expected {N_CAPABILITIES} capability demands, got {len(self.capability_demands)}")
        if len(self.propensity_windows) != len(PROPENSITY_DIMENSIONS):
            raise MalformedInstance(
                f"expected {len(PROPENSITY_DIMENSIONS)} propensity windows, "
                f"got {len(self.propensity_windows)}")
        if self.y not in (0, 1):
            raise MalformedInstance(f"label must be 0 or 1, got {self.y!r}")


@dataclass(frozen=True)
class AssessorConfig:
    feature_set: str = "caps_plus_all"
    n_folds: int = 10
    min_samples_split: int = 50
    n_trees: int = 100
    seed: int = 0
    include_width: bool = False  # extension: append window widths after the midpoints

    def __post_init__(self):
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"unknown feature set {self.feature_set!r}")
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")


def window_midpoint(w: PropensityWindow) -> float:
    """Midpoint, or the finite bound of a one-sided window."""
    if math.isinf(w.upper):
        return w.lower
    if math.isinf(w.lower):
        return w.upper
    return (w.lower + w.upper) / 2.0


def _width(w: PropensityWindow) -> float:
    return 0.0 if w.is_one_sided else w.upper - w.lower


def featurize(instance: InstanceFeatures, feature_set: str = "caps_plus_all",
              include_width: bool = False) -> np.ndarray:
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}")
    caps = [float(c) for c in instance.capability_demands]
    if not all(math.isfinite(c) for c in caps):
        raise MalformedInstance("capability demands must be finite")
    if feature_set == "caps_only":
        windows: Sequence[PropensityWindow] = ()
    elif feature_set == "caps_plus_ultracrep":
        windows = (instance.propensity_windows[ULTRACREP],)
    else:
        windows = instance.propensity_windows
    extra = [window_midpoint(w) for w in windows]
    if include_width:
        extra += [_width(w) for w in windows]
    return np.array(caps + extra, dtype=float)


def design_matrix(instances: Sequence[InstanceFeatures], feature_set: str,
                  include_width: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    X = np.vstack([featurize(i, feature_set, include_width) for i in instances])
    y = np.array([i.y for i in instances], dtype=int)
    return X, y


# --- forest ---------------------------------------------------------------

class Classifier:
    """Thin wrapper over a fitted random forest with dimension checks."""

    def __init__(self, forest: RandomForestClassifier, n_features: int):
        self.forest = forest
        self.n_features = n_features

    @property
    def n_trees(self) -> int:
        return len(getattr(self.forest, "estimators_", ()))

    def predict_proba(self, X) -> np.ndarray:
        """Class-1 probability: mean over trees of the leaf's class-1 share."""
        if self.n_trees == 0:
            raise ValueError("forest has no trees")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        classes = list(self.forest.classes_)
        return self.forest.predict_proba(X)[:, classes.index(1)]


def train_forest(X, y, config: AssessorConfig = AssessorConfig()) -> Classifier:
    """Bagged Gini trees with sqrt(d) features per split, seeded."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise SingleClass("training rows contain a single class")
    forest = RandomForestClassifier(
        n_estimators=config.n_trees,
        criterion="gini",
        max_features="sqrt",
        min_samples_split=config.min_samples_split,
        bootstrap=True,
        random_state=config.seed,
    )
    forest.fit(X, y)
    return Classifier(forest, X.shape[1])


def predict_proba(model: Classifier, vector) -> float:
    vector = np.asarray(vector, dtype=float)
    if vector.ndim != 1:
        raise DimensionMismatch("predict_proba expects a single feature vector")
    return float(model.predict_proba(vector[None, :])[0])


# --- evaluation -----------------------------------------------------------

def auroc(scores, labels) -> float:
    """Mann-Whitney rank statistic; tied scores receive their average rank."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateFold("AUROC needs both classes")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def stratified_folds(labels, n_folds: int, seed: int) -> List[np.ndarray]:
    """Test-index arrays: a seeded shuffle dealt round-robin within each class."""
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(labels), dtype=int)
    offset = 0
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        assignment[idx] = (offset + np.arange(len(idx))) % n_folds
        offset += len(idx)
    return [np.flatnonzero(assignment == k) for k in range(n_folds)]


@dataclass(frozen=True)
class CVResult:
    auroc_mean: float
    per_fold: Tuple[float, ...]
    n_features: int = 0


def _check_instances(instances, n_folds):
    if len(instances) == 0:
        raise ValueError("no instances")
    labels = np.array([i.y for i in instances], dtype=int)
    if len(instances) < n_folds:
        raise DegenerateFold(f"{len(instances)} instances cannot fill {n_folds} folds")
    if labels.min() == labels.max():
        raise SingleClass("instances contain a single class")
    if min(labels.sum(), len(labels) - labels.sum()) < n_folds:
        raise DegenerateFold("too few instances of the minority class to stratify")
    return labels


def cross_validated_auroc(instances: Sequence[InstanceFeatures],
                          config: AssessorConfig = AssessorConfig(),
                          folds: Sequence[np.ndarray] = None) -> CVResult:
    labels = _check_instances(instances, config.n_folds)
    if folds is None:
        folds = stratified_folds(labels, config.n_folds, config.seed)
    X, y = design_matrix(instances, config.feature_set, config.include_width)
    everything = np.arange(len(y))
    scores = []
    for test in folds:
        train = np.setdiff1d(everything, test)
        assert np.intersect1d(train, test).size == 0
        if len(np.unique(y[test])) < 2:
            raise DegenerateFold("a test fold contains a single class")
        model = train_forest(X[train], y[train], config)
        scores.append(auroc(model.predict_proba(X[test]), y[test]))
    return CVResult(float(np.mean(scores)), tuple(scores), X.shape[1])


def compare_feature_sets(instances: Sequence[InstanceFeatures],
                         config: AssessorConfig = AssessorConfig(),
                         feature_sets: Sequence[str] = FEATURE_SETS) -> Dict[str, CVResult]:
    """Cross-validated AUROC per feature set, all on one shared fold split."""
    labels = _check_instances(instances, config.n_folds)
    folds = stratified_folds(labels, config.n_folds, config.seed)
    out = {}
    for name in feature_sets:
        cfg = AssessorConfig(name, config.n_folds, config.min_samples_split,
                             config.n_trees, config.seed, config.include_width)
        out[name] = cross_validated_auroc(instances, cfg, folds)
    return out


# --- synthetic benchmarks -------------------------------------------------

def _random_window(rng) -> PropensityWindow:
    lo, hi = sorted(rng.integers(-3, 4, size=2))
    return PropensityWindow(float(lo), float(hi))


def synthetic_benchmark(kind: str, n: int = 360, seed: int = 0,
                        hidden_theta: float = 0.5, noise: float = 0.1) -> List[InstanceFeatures]:
    """Constructed instance sets with a known source of success.

    ``kind="propensity"``: success iff the ultracrepidarianism window contains
    ``hidden_theta``, with a capability-dependent flip rate (at most ``noise``
    plus a small demand-driven term).
    ``kind="capability"``: success depends only on three capability demands;
    the windows are random and carry no signal.
    """
    if kind not in ("propensity", "capability"):
        raise ValueError("kind must be 'propensity' or 'capability'")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        caps = rng.integers(0, 6, size=N_CAPABILITIES).astype(float)
        windows = tuple(_random_window(rng) for _ in PROPENSITY_DIMENSIONS)
        if kind == "propensity":
            base = windows[ULTRACREP].contains(hidden_theta)
            flip = noise + 0.02 * caps[6]
            y = int(base) ^ int(rng.random() < flip)
        else:
            logit = 2.5 - 1.35 * (caps[0] + caps[6] + caps[9]) / 3.0
            y = int(rng.random() < 1.0 / (1.0 + math.exp(-logit)))
        out.append(InstanceFeatures(tuple(caps), windows, y, id=f"{kind}-{seed}-{k}"))
    return out
