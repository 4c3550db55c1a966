"""Bagged Gini decision trees with majority vote.

Every feature is considered at every node (plain bagging, no random feature
subsets). Trees are stored as flat pre-order node arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from joblib import Parallel, delayed

from noisyneighbor.core.errors import ConfigError
from noisyneighbor.core.rng import substream
from noisyneighbor.core.svm import training_arrays

logger = logging.getLogger(__name__)

TIE_BREAK = -1
# Decreases within this distance of the best count as ties.
_TIE_TOL = 1e-9
# Smallest decrease treated as positive.
_MIN_DECREASE = 1e-12


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 300
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be at least 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be at least 1, got {self.min_leaf}")


class Split(NamedTuple):
    feature: int
    threshold: float
    decrease: float


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Pre-order node arrays; ``feature == -1`` marks a leaf.

    ``counts[i]`` holds the (quiet, noisy) training counts that reached node
    ``i``; a sample goes left when ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        for name, dtype in (("feature", int), ("threshold", float), ("left", int), ("right", int), ("counts", int)):
            array = np.array(getattr(self, name), dtype=dtype)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def leaf_label(self, node: int) -> int:
        quiet, noisy = self.counts[node]
        return 1 if noisy > quiet else TIE_BREAK

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if not self.is_leaf(node):
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=int)
        active = ~np.array([self.is_leaf(0)] * len(X), dtype=bool)
        rows = np.arange(len(X))
        while active.any():
            idx = rows[active]
            current = node[idx]
            go_left = X[idx, self.feature[current]] <= self.threshold[current]
            node[idx] = np.where(go_left, self.left[current], self.right[current])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        leaves = self.apply(X)
        quiet, noisy = self.counts[leaves, 0], self.counts[leaves, 1]
        return np.where(noisy > quiet, 1, TIE_BREAK)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    tie_break: int = TIE_BREAK
    seed: int = 0
    n_features: int = 3

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if not self.trees:
            raise ValueError("a forest needs at least one tree")


def gini_impurity(counts: Sequence[float]) -> float:
    """1 - sum_k p_k^2 over class counts.

    Raises:
        ValueError: If every count is zero or any is negative.
    """
    counts = np.asarray(counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def _gini_pairs(quiet: np.ndarray, noisy: np.ndarray) -> np.ndarray:
    total = quiet + noisy
    with np.errstate(invalid="ignore", divide="ignore"):
        pq = quiet / total
        pn = noisy / total
    return 1.0 - (pq * pq + pn * pn)


def _scan_feature(xs: np.ndarray, ws: np.ndarray, noisy_ws: np.ndarray, total: float, noisy_total: float,
                  parent: float, min_leaf: int) -> tuple[np.ndarray, np.ndarray]:
    """Decrease and threshold of every admissible cut of one sorted feature column."""
    n_left = np.cumsum(ws)[:-1]
    noisy_left = np.cumsum(noisy_ws)[:-1]
    n_right = total - n_left
    noisy_right = noisy_total - noisy_left
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    gini_left = _gini_pairs(n_left - noisy_left, noisy_left)
    gini_right = _gini_pairs(n_right - noisy_right, noisy_right)
    decrease = parent - (n_left / total) * gini_left - (n_right / total) * gini_right
    thresholds = 0.5 * (xs[:-1] + xs[1:])
    return decrease[valid], thresholds[valid]


def _choose(candidates: list[tuple[int, np.ndarray, np.ndarray]]) -> Split | None:
    best_value = max((d.max() for _, d, _ in candidates if len(d)), default=None)
    if best_value is None or best_value <= _MIN_DECREASE:
        return None
    for feature, decrease, thresholds in candidates:
        near = np.flatnonzero(decrease >= best_value - _TIE_TOL)
        if len(near):
            i = near[np.argmin(thresholds[near])]
            return Split(feature, float(thresholds[i]), float(decrease[i]))
    return None


def _best_split_sorted(X, noisy, weights, orders, min_leaf) -> Split | None:
    sample = orders[0]
    total = float(weights[sample].sum())
    noisy_total = float((weights * noisy)[sample].sum())
    parent = gini_impurity([total - noisy_total, noisy_total])
    if parent == 0.0:
        return None
    candidates = []
    for feature, order in enumerate(orders):
        ws = weights[order]
        decrease, thresholds = _scan_feature(
            X[order, feature], ws, ws * noisy[order], total, noisy_total, parent, min_leaf
        )
        candidates.append((feature, decrease, thresholds))
    return _choose(candidates)


def best_split(instances, min_leaf: int = 1) -> Split | None:
    """Best Gini split over all features and midpoints between distinct values.

    Ties go to the lowest feature index, then the lowest threshold. Returns
    None for a pure node or when no cut has a positive decrease.

    Raises:
        ValueError: With fewer than two instances.
    """
    X, y = training_arrays(instances)
    if len(X) < 2:
        raise ValueError("best_split needs at least two instances")
    orders = [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]
    return _best_split_sorted(X, (y > 0).astype(float), np.ones(len(X)), orders, min_leaf)


def _grow(X: np.ndarray, y: np.ndarray, weights: np.ndarray, min_leaf: int) -> DecisionTree:
    """Grow a full tree on the rows with positive weight."""
    noisy = (y > 0).astype(float)
    rows = np.flatnonzero(weights > 0)
    root_orders = [rows[np.argsort(X[rows, f], kind="stable")] for f in range(X.shape[1])]

    feature, threshold, left, right, counts = [], [], [], [], []
    # (parent node, is_left_child, per-feature sorted row orders)
    stack = [(-1, False, root_orders)]
    while stack:
        parent, is_left, orders = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        sample = orders[0]
        w = weights[sample]
        n_noisy = int(round(float((w * noisy[sample]).sum())))
        n_total = int(round(float(w.sum())))
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((n_total - n_noisy, n_noisy))

        if n_noisy in (0, n_total) or n_total < 2 * min_leaf:
            continue
        split = _best_split_sorted(X, noisy, weights, orders, min_leaf)
        if split is None:
            continue
        feature[node] = split.feature
        threshold[node] = split.threshold
        goes_left = X[:, split.feature] <= split.threshold
        left_orders = [o[goes_left[o]] for o in orders]
        right_orders = [o[~goes_left[o]] for o in orders]
        # Right is pushed first so the left subtree is laid out next (pre-order).
        stack.append((node, False, right_orders))
        stack.append((node, True, left_orders))

    return DecisionTree(
        np.array(feature), np.array(threshold), np.array(left), np.array(right),
        np.array(counts, dtype=int).reshape(-1, 2),
    )


def grow_tree(instances, min_leaf: int = 1, rng: np.random.Generator | None = None) -> DecisionTree:
    """Grow one tree.

    Args:
        instances: Instances or an ``(X, y)`` pair.
        min_leaf: Minimum training count in a leaf.
        rng: When given, the tree is grown on a bootstrap resample of size n
            drawn from this stream; otherwise on the instances as given.

    Raises:
        ValueError: If ``instances`` is empty.
    """
    X, y = training_arrays(instances)
    if len(X) == 0:
        raise ValueError("cannot grow a tree on an empty set")
    if rng is None:
        weights = np.ones(len(X))
    else:
        weights = np.bincount(rng.integers(0, len(X), size=len(X)), minlength=len(X)).astype(float)
    return _grow(X, y, weights, min_leaf)


def _grow_member(X: np.ndarray, y: np.ndarray, min_leaf: int, seed: int, index: int) -> DecisionTree:
    return grow_tree((X, y), min_leaf, substream(seed, "forest", index))


def train_forest(instances, h: ForestHyperparams, n_jobs: int = 1) -> ForestModel:
    """Train ``h.n_trees`` trees on independent bootstrap samples.

    Tree ``t`` draws its bootstrap from the substream ``(h.seed, "forest", t)``,
    so the forest does not depend on ``n_jobs``.

    Raises:
        ValueError: If the data holds a single class.
    """
    X, y = training_arrays(instances)
    if len(X) == 0:
        raise ValueError("cannot train a forest on an empty set")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    trees = Parallel(n_jobs=n_jobs)(
        delayed(_grow_member)(X, y, h.min_leaf, h.seed, t) for t in range(h.n_trees)
    )
    logger.debug("trained %d trees (mean depth %.1f)", len(trees), np.mean([t.depth() for t in trees]))
    return ForestModel(tuple(trees), TIE_BREAK, h.seed, X.shape[1])


def _check_dim(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return X


def vote_counts(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Number of trees voting noisy for each row."""
    X = _check_dim(model, X)
    return sum((tree.predict_batch(X) == 1).astype(int) for tree in model.trees)


def predict_forest_batch(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Majority vote per row; an exact tie yields ``model.tie_break``."""
    noisy_votes = vote_counts(model, X)
    quiet_votes = len(model.trees) - noisy_votes
    return np.where(noisy_votes > quiet_votes, 1, np.where(quiet_votes > noisy_votes, -1, model.tie_break))


def predict_forest(model: ForestModel, x: Sequence[float]) -> int:
    """Majority vote for one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return int(predict_forest_batch(model, x[None, :])[0])
