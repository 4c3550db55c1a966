"""Best single-feature threshold rule, the reference point for the learned models."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from noisyneighbor.core.svm import training_arrays

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThresholdRule:
    """Predict noisy when ``direction * (x[feature] - threshold) >= 0``.

    ``direction`` is +1 for "high values are noisy" and -1 for the reverse.
    """

    feature: int
    direction: int
    threshold: float
    training_f1: float = 0.0

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError(f"direction must be -1 or +1, got {self.direction}")
        if self.feature < 0:
            raise ValueError(f"feature must be non-negative, got {self.feature}")

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.feature >= X.shape[1]:
            raise ValueError(f"rule reads feature {self.feature}, input has {X.shape[1]}")
        return np.where(self.direction * (X[:, self.feature] - self.threshold) >= 0, 1, -1)


def _f1(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    denominator = 2 * tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denominator > 0, 2 * tp / np.maximum(denominator, 1), 0.0)


def _candidates(column: np.ndarray, noisy: np.ndarray, direction: int):
    """F1 and threshold for every cut of one feature in one direction."""
    values, inverse = np.unique(column, return_inverse=True)
    pos = np.bincount(inverse, weights=noisy, minlength=len(values))
    neg = np.bincount(inverse, weights=1.0 - noisy, minlength=len(values))
    mids = 0.5 * (values[:-1] + values[1:])
    if direction == 1:
        # Cut j flags every value from values[j] upwards.
        tp = np.cumsum(pos[::-1])[::-1]
        fp = np.cumsum(neg[::-1])[::-1]
        thresholds = np.concatenate([values[:1], mids])
    else:
        tp = np.cumsum(pos)
        fp = np.cumsum(neg)
        thresholds = np.concatenate([mids, values[-1:]])
    return _f1(tp, fp, pos.sum() - tp), thresholds


def fit_threshold(instances) -> ThresholdRule:
    """Pick the feature, direction and threshold with the highest training F1.

    Ties go to the lowest feature, then direction +1, then the lowest threshold.

    Raises:
        ValueError: On an empty training set.
    """
    X, y = training_arrays(instances)
    if len(X) == 0:
        raise ValueError("cannot fit a threshold rule on an empty set")
    noisy = (y > 0).astype(float)
    best: ThresholdRule | None = None
    for feature in range(X.shape[1]):
        for direction in (1, -1):
            f1, thresholds = _candidates(X[:, feature], noisy, direction)
            i = int(np.argmax(f1))
            if best is None or f1[i] > best.training_f1 + 1e-12:
                best = ThresholdRule(feature, direction, float(thresholds[i]), float(f1[i]))
    logger.debug(
        "threshold rule: feature %d, direction %+d, threshold %.6g, training F1 %.4f",
        best.feature, best.direction, best.threshold, best.training_f1,
    )
    return best
