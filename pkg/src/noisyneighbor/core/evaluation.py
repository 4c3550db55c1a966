"""k-fold cross-validation, precision/recall/F1 and hyperparameter sweeps."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Protocol, Sequence

import numpy as np
from joblib import Parallel, delayed
from rich.table import Table

from noisyneighbor.core.detector import DetectorSpec
from noisyneighbor.core.errors import EvaluationError, NoisyNeighborError, ParseError
from noisyneighbor.core.rng import derive_seed, substream
from noisyneighbor.core.telemetry import Dataset

logger = logging.getLogger(__name__)

CURVE_HEADER = "param,precision,recall,f1"
REPORT_FORMAT_VERSION = 1

DEFAULT_C_GRID = tuple(v**2 for v in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.8, 4.5))
DEFAULT_TREE_GRID = (1, 5, 10, 25, 50, 100, 200, 300)


class Trainer(Protocol):
    """Anything that fits on ``(X, y, seed)`` and returns an object with ``predict(X)``."""

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int = 0) -> Any: ...

    def describe(self) -> str: ...


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with +1 (noisy) as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions: Sequence[int], truth: Sequence[int]) -> ConfusionCounts:
    """Count agreement between predicted and true labels.

    Raises:
        ValueError: On empty input or a length mismatch.
    """
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape or predictions.ndim != 1:
        raise ValueError(f"length mismatch: {predictions.shape} vs {truth.shape}")
    if len(truth) == 0:
        raise ValueError("cannot count an empty prediction set")
    flagged = predictions == 1
    noisy = truth == 1
    return ConfusionCounts(
        tp=int(np.sum(flagged & noisy)),
        fp=int(np.sum(flagged & ~noisy)),
        tn=int(np.sum(~flagged & ~noisy)),
        fn=int(np.sum(~flagged & noisy)),
    )


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics(c: ConfusionCounts) -> tuple[float, float, float]:
    """Precision, recall and F1; any 0/0 yields 0 for that metric."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return precision, recall, _f1(precision, recall)


@dataclass(frozen=True)
class EvalReport:
    """Per-fold and pooled confusion counts of one cross-validation run.

    The headline precision/recall/F1 are computed from the pooled counts
    (micro average); :attr:`macro` averages the per-fold metrics instead.
    """

    per_fold: tuple[ConfusionCounts, ...]
    model_descriptor: str = ""
    seed: int = 0
    stratified: bool = False
    pooled: ConfusionCounts = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "per_fold", tuple(self.per_fold))
        pooled = ConfusionCounts()
        for counts in self.per_fold:
            pooled = pooled + counts
        object.__setattr__(self, "pooled", pooled)

    @property
    def k(self) -> int:
        return len(self.per_fold)

    @property
    def precision(self) -> float:
        return metrics(self.pooled)[0]

    @property
    def recall(self) -> float:
        return metrics(self.pooled)[1]

    @property
    def f1(self) -> float:
        return metrics(self.pooled)[2]

    @property
    def macro(self) -> tuple[float, float, float]:
        if not self.per_fold:
            return 0.0, 0.0, 0.0
        per_fold = np.array([metrics(c) for c in self.per_fold])
        precision, recall, f1 = per_fold.mean(axis=0)
        return float(precision), float(recall), float(f1)

    def to_json(self) -> str:
        document = {
            "format_version": REPORT_FORMAT_VERSION,
            "model": self.model_descriptor,
            "k": self.k,
            "seed": self.seed,
            "stratified": self.stratified,
            "per_fold": [asdict(c) for c in self.per_fold],
            "pooled": asdict(self.pooled),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }
        return json.dumps(document, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        """Rebuild a report; the stored pooled counts must match the folds.

        Raises:
            ParseError: Malformed document or inconsistent counts.
        """
        try:
            document = json.loads(text)
            if document.get("format_version") != REPORT_FORMAT_VERSION:
                raise ParseError(f"unsupported report format_version {document.get('format_version')!r}")
            report = cls(
                per_fold=tuple(ConfusionCounts(**c) for c in document["per_fold"]),
                model_descriptor=str(document.get("model", "")),
                seed=int(document.get("seed", 0)),
                stratified=bool(document.get("stratified", False)),
            )
            stored = ConfusionCounts(**document["pooled"]) if "pooled" in document else report.pooled
        except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as e:
            raise ParseError(f"malformed evaluation report: {e}") from e
        if stored != report.pooled:
            raise ParseError("pooled counts do not equal the sum of the folds")
        return report

    def to_table(self) -> Table:
        table = Table(title=f"{self.k}-fold cross-validation: {self.model_descriptor}")
        for column in ("fold", "tp", "fp", "tn", "fn", "precision", "recall", "f1"):
            table.add_column(column, justify="right")
        for i, c in enumerate(self.per_fold):
            table.add_row(str(i), *(str(v) for v in (c.tp, c.fp, c.tn, c.fn)), *(f"{m:.4f}" for m in metrics(c)))
        p = self.pooled
        table.add_section()
        table.add_row("pooled", *(str(v) for v in (p.tp, p.fp, p.tn, p.fn)), *(f"{m:.4f}" for m in metrics(p)))
        table.add_row("macro", "", "", "", "", *(f"{m:.4f}" for m in self.macro))
        return table


@dataclass(frozen=True)
class SweepPoint:
    param: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class SweepCurve:
    """Metrics as a function of one hyperparameter (strictly increasing)."""

    points: tuple[SweepPoint, ...] = ()
    param_name: str = field(default="param", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        params = [p.param for p in self.points]
        if any(b <= a for a, b in zip(params, params[1:])):
            raise ValueError("sweep parameter values must be strictly increasing")

    def __len__(self) -> int:
        return len(self.points)

    def f1_at(self, param: float) -> float:
        for point in self.points:
            if abs(point.param - param) <= 1e-9 * max(1.0, abs(param)):
                return point.f1
        raise KeyError(param)

    def to_table(self) -> Table:
        table = Table(title=f"sweep over {self.param_name}")
        for column in (self.param_name, "precision", "recall", "f1"):
            table.add_column(column, justify="right")
        for p in self.points:
            table.add_row(f"{p.param:g}", f"{p.precision:.4f}", f"{p.recall:.4f}", f"{p.f1:.4f}")
        return table


def kfold_split(n: int, k: int, seed: int = 0, labels: Sequence[int] | None = None) -> list[np.ndarray]:
    """Partition ``range(n)`` into ``k`` disjoint folds after a seeded shuffle.

    Fold sizes differ by at most one; the first ``n % k`` folds are the larger
    ones. With ``labels`` the shuffled indices of each class are dealt to the
    folds round-robin, so every fold sees both classes in proportion.

    Returns:
        Sorted index arrays, one per fold.

    Raises:
        ValueError: If ``k < 2`` or ``k > n``.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of instances n={n}")
    order = substream(seed, "kfold").permutation(n)
    if labels is None:
        return [np.sort(fold) for fold in np.array_split(order, k)]

    labels = np.asarray(labels)
    if len(labels) != n:
        raise ValueError("labels must have one entry per instance")
    assignment = np.empty(n, dtype=int)
    dealt = 0
    for label in np.unique(labels):
        members = order[labels[order] == label]
        assignment[members] = (dealt + np.arange(len(members))) % k
        dealt += len(members)
    return [np.flatnonzero(assignment == f) for f in range(k)]


def _as_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, Dataset):
        return dataset.features, dataset.labels
    X, y = dataset
    return np.asarray(X, dtype=float), np.asarray(y, dtype=int)


def _run_fold(trainer: Trainer, X, y, train, test, seed: int, fold: int) -> np.ndarray:
    try:
        fitted = trainer.fit(X[train], y[train], seed)
        return np.asarray(fitted.predict(X[test]), dtype=int)
    except (NoisyNeighborError, ValueError) as e:
        raise EvaluationError(str(e), fold) from e


def cross_validate(
    trainer: Trainer,
    dataset,
    k: int = 10,
    seed: int = 0,
    stratified: bool = False,
    n_jobs: int = 1,
) -> EvalReport:
    """k-fold cross-validation of ``trainer`` on ``dataset``.

    Each fold trains on the other k-1 folds only (the trainer fits its own
    standardizer there) and predicts the held-out fold. Fold ``i`` trains with
    the seed derived from ``(seed, "fold", i)``, so results do not depend on
    ``n_jobs``.

    Args:
        trainer: A :class:`DetectorSpec` or any object with ``fit``/``describe``.
        dataset: A :class:`Dataset` or an ``(X, y)`` pair.

    Raises:
        EvaluationError: A fold's training split holds a single class, or
            training on it failed.
    """
    X, y = _as_arrays(dataset)
    folds = kfold_split(len(y), k, seed, labels=y if stratified else None)
    every = np.arange(len(y))
    jobs = []
    for i, test in enumerate(folds):
        train = np.setdiff1d(every, test, assume_unique=True)
        if len(np.unique(y[train])) < 2:
            raise EvaluationError("training split contains a single class", i)
        jobs.append(delayed(_run_fold)(trainer, X, y, train, test, derive_seed(seed, "fold", i), i))

    predictions = Parallel(n_jobs=n_jobs)(jobs)
    per_fold = []
    for i, (test, predicted) in enumerate(zip(folds, predictions)):
        counts = confusion(predicted, y[test])
        per_fold.append(counts)
        logger.debug("fold %d: %s F1=%.4f", i, counts, metrics(counts)[2])
    report = EvalReport(tuple(per_fold), trainer.describe(), seed, stratified)
    logger.info(
        "%s: precision %.4f recall %.4f F1 %.4f over %d instances",
        report.model_descriptor, report.precision, report.recall, report.f1, report.pooled.total,
    )
    return report


def _check_grid(values: Sequence[float], name: str, minimum: float, inclusive: bool) -> None:
    if not values:
        raise ValueError(f"{name} grid is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} values must be strictly increasing")
    low = values[0]
    if low < minimum or (not inclusive and low == minimum):
        raise ValueError(f"{name} values must be {'>=' if inclusive else '>'} {minimum}")


def _sweep(specs: list[tuple[float, DetectorSpec]], dataset, k, seed, stratified, n_jobs, name) -> SweepCurve:
    points = []
    for param, spec in specs:
        report = cross_validate(spec, dataset, k, seed, stratified, n_jobs)
        points.append(SweepPoint(float(param), report.precision, report.recall, report.f1))
        logger.info("sweep %s=%g: F1 %.4f", name, param, report.f1)
    return SweepCurve(tuple(points), name)


def sweep_svm_C(
    dataset,
    C_values: Sequence[float] = DEFAULT_C_GRID,
    gamma: float | None = None,
    k: int = 10,
    seed: int = 0,
    base: DetectorSpec | None = None,
    stratified: bool = False,
    n_jobs: int = 1,
) -> SweepCurve:
    """One cross-validation per penalty ``C``; all points share the fold split.

    Raises:
        ValueError: Grid empty, not strictly increasing or not positive.
        EvaluationError: Propagated from :func:`cross_validate`.
    """
    _check_grid(list(C_values), "C", 0.0, inclusive=False)
    base = base or DetectorSpec(kind="svm", expansion="quadratic")
    specs = [(C, replace(base, kind="svm", svm=replace(base.svm, C=float(C), gamma=gamma))) for C in C_values]
    return _sweep(specs, dataset, k, seed, stratified, n_jobs, "C")


def sweep_forest_trees(
    dataset,
    tree_counts: Sequence[int] = DEFAULT_TREE_GRID,
    k: int = 10,
    seed: int = 0,
    base: DetectorSpec | None = None,
    stratified: bool = False,
    n_jobs: int = 1,
) -> SweepCurve:
    """One cross-validation per forest size.

    Raises:
        ValueError: Grid empty, not strictly increasing or below 1.
        EvaluationError: Propagated from :func:`cross_validate`.
    """
    _check_grid(list(tree_counts), "tree count", 1, inclusive=True)
    base = base or DetectorSpec(kind="forest")
    specs = [
        (n, replace(base, kind="forest", forest=replace(base.forest, n_trees=int(n)))) for n in tree_counts
    ]
    return _sweep(specs, dataset, k, seed, stratified, n_jobs, "trees")


def emit_curve_csv(curve: SweepCurve) -> str:
    rows = [CURVE_HEADER]
    rows.extend(f"{p.param:.6f},{p.precision:.6f},{p.recall:.6f},{p.f1:.6f}" for p in curve.points)
    return "\n".join(rows) + "\n"


def parse_curve_csv(text: str, param_name: str = "param") -> SweepCurve:
    """Parse a curve CSV written by :func:`emit_curve_csv`.

    Raises:
        ParseError: Wrong header, column count or number.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != CURVE_HEADER:
        raise ParseError(f"expected header {CURVE_HEADER!r}", 1)
    points = []
    for line_number, line in enumerate(lines[1:], start=2):
        tokens = line.rstrip("\r").split(",")
        if len(tokens) != 4:
            raise ParseError(f"expected 4 columns, got {len(tokens)}", line_number)
        try:
            points.append(SweepPoint(*(float(t) for t in tokens)))
        except ValueError as e:
            raise ParseError(f"not a number in {line!r}", line_number) from e
    try:
        return SweepCurve(tuple(points), param_name)
    except ValueError as e:
        raise ParseError(str(e)) from e
