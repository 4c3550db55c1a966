"""Fitted detection chain: standardizer, optional expansion, classifier."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from noisyneighbor.core.baseline import ThresholdRule, fit_threshold
from noisyneighbor.core.errors import ConfigError, ConvergenceError
from noisyneighbor.core.features import EXPANSIONS, Standardizer, expand, fit_standardizer_matrix
from noisyneighbor.core.forest import ForestHyperparams, ForestModel, predict_forest_batch, train_forest
from noisyneighbor.core.svm import SvmHyperparams, SvmModel, predict_batch, train_smo

logger = logging.getLogger(__name__)

MODEL_KINDS = ("svm", "forest", "threshold")

Model = Union[SvmModel, ForestModel, ThresholdRule]


@dataclass(frozen=True)
class DetectorSpec:
    """Everything needed to fit a detector except the data and the seed.

    ``strict=False`` accepts the best SMO iterate (with a warning) when the
    solver stalls above its KKT tolerance.
    """

    kind: str = "forest"
    expansion: str = "none"
    expand_first: bool = False
    svm: SvmHyperparams = field(default_factory=SvmHyperparams)
    forest: ForestHyperparams = field(default_factory=ForestHyperparams)
    n_jobs: int = 1
    strict: bool = False

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.expansion not in EXPANSIONS:
            raise ConfigError(f"unknown expansion {self.expansion!r}; expected one of {EXPANSIONS}")

    def describe(self) -> str:
        if self.kind == "svm":
            gamma = "1/d" if self.svm.gamma is None else f"{self.svm.gamma:g}"
            head = f"svm(C={self.svm.C:g}, gamma={gamma})"
        elif self.kind == "forest":
            head = f"forest(trees={self.forest.n_trees}, min_leaf={self.forest.min_leaf})"
        else:
            head = "threshold"
        order = "expand-then-standardize" if self.expand_first else "standardize-then-expand"
        if self.expansion == "none":
            return head
        return f"{head} + {self.expansion} ({order})"

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int = 0) -> "Detector":
        return fit_detector(self, X, y, seed)


@dataclass(frozen=True, eq=False)
class Detector:
    kind: str
    standardizer: Standardizer
    expansion: str
    expand_first: bool
    model: Model

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Map raw (cpu, bw_in, bw_out) rows into the model's input space."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.expand_first:
            return self.standardizer.transform(expand(X, self.expansion))
        return expand(self.standardizer.transform(X), self.expansion)

    def predict(self, X: np.ndarray) -> np.ndarray:
        Z = self.transform(X)
        if self.kind == "svm":
            return predict_batch(self.model, Z)
        if self.kind == "forest":
            return predict_forest_batch(self.model, Z)
        return self.model.predict_batch(Z)


def fit_detector(spec: DetectorSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> Detector:
    """Fit the standardizer on ``X`` only, then train the classifier.

    Raises:
        ValueError: Empty or single-class training data.
        ConvergenceError: SMO stalled and ``spec.strict`` is set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if len(X) == 0:
        raise ValueError("cannot fit a detector on an empty set")
    if spec.expand_first:
        standardizer = fit_standardizer_matrix(expand(X, spec.expansion))
    else:
        standardizer = fit_standardizer_matrix(X)
    detector = Detector(spec.kind, standardizer, spec.expansion, spec.expand_first, model=None)
    Z = detector.transform(X)

    if spec.kind == "svm":
        try:
            model = train_smo((Z, y), spec.svm, seed=seed)
        except ConvergenceError as e:
            if spec.strict:
                raise
            logger.warning("%s; keeping the best iterate", e)
            model = e.best_model
    elif spec.kind == "forest":
        model = train_forest((Z, y), replace(spec.forest, seed=seed), n_jobs=spec.n_jobs)
    else:
        model = fit_threshold((Z, y))
    return replace(detector, model=model)
