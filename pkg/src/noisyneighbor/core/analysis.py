"""Per-feature dependence on the noise signal: Pearson r and the maximal information coefficient."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from rich.table import Table

from noisyneighbor.core.errors import ParseError, UndefinedCorrelationError
from noisyneighbor.core.telemetry import DEFAULT_NOISE_THRESHOLD, FEATURE_NAMES, Window

logger = logging.getLogger(__name__)

TARGETS = ("noise-cpu", "binary-label")
REPORT_HEADER = "stat,cpu,bw_in,bw_out"
COLUMN_TITLES = ("CPU", "BW in", "BW out")

DEFAULT_B_EXPONENT = 0.6
# The optimized axis is coarsened to this many groups per allowed column.
CLUMP_FACTOR = 15


def _series_pair(x: Sequence[float], y: Sequence[float], minimum: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"series must be 1-D and of equal length, got {x.shape} and {y.shape}")
    if len(x) < minimum:
        raise ValueError(f"need at least {minimum} points, got {len(x)}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("series must be finite")
    return x, y


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation.

    Raises:
        ValueError: Lengths differ or fewer than two points.
        UndefinedCorrelationError: Either series is constant.
    """
    x, y = _series_pair(x, y, 2)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    return float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))


def equipartition(values: Sequence[float], bins: int) -> np.ndarray:
    """Assign each value to one of at most ``bins`` bins of (nearly) equal mass.

    Bins follow the sorted order and equal values always share a bin, so
    heavy ties can leave fewer than ``bins`` bins.

    Returns:
        Bin index per input position, 0-based and ascending with the value.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    order = np.argsort(values, kind="stable")
    ordered = values[order]
    group_ends = np.flatnonzero(np.append(ordered[1:] != ordered[:-1], True)) + 1

    assignment = np.empty(n, dtype=int)
    desired = n / bins
    current, size, start = 0, 0, 0
    for end in group_ends:
        group = end - start
        if size and current < bins - 1 and abs(size + group - desired) >= abs(size - desired):
            current += 1
            size = 0
            desired = (n - start) / (bins - current)
        assignment[order[start:end]] = current
        size += group
        start = end
    return assignment


def _xlogx(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    positive = v > 0
    out[positive] = v[positive] * np.log2(v[positive])
    return out


def _optimize_axis(groups: np.ndarray, rows: np.ndarray, max_columns: int) -> np.ndarray:
    """Best mutual information (bits) using at most ``c`` columns, for c = 0..max_columns.

    Columns are unions of consecutive ``groups`` (ascending along the
    optimized axis); ``rows`` is the fixed partition of the other axis.
    """
    n = len(groups)
    n_groups = int(groups.max()) + 1
    n_rows = int(rows.max()) + 1
    table = np.bincount(groups * n_rows + rows, minlength=n_groups * n_rows).reshape(n_groups, n_rows)
    cum = np.vstack([np.zeros(n_rows), np.cumsum(table, axis=0)])

    # cost[s, t]: n * P(column) * H(rows | column) for the column spanning groups s..t-1.
    cells = cum[None, :, :] - cum[:, None, :]
    cost = _xlogx(cells.sum(axis=-1)) - _xlogx(cells).sum(axis=-1)
    upper = np.triu(np.ones_like(cost, dtype=bool), k=1)
    cost = np.where(upper, cost, np.inf)

    row_entropy = (n * math.log2(n) - _xlogx(table.sum(axis=0)).sum()) / n
    best = np.zeros(max_columns + 1)
    partial = cost[0]
    lowest = partial[-1]
    best[1] = max(0.0, row_entropy - lowest / n)
    for columns in range(2, max_columns + 1):
        if columns <= n_groups:
            partial = np.min(partial[:, None] + cost, axis=0)
            lowest = min(lowest, partial[-1])
        best[columns] = max(0.0, row_entropy - lowest / n)
    return best


def _column_groups(values: np.ndarray, max_columns: int, clump_factor: int) -> np.ndarray:
    distinct, ranks = np.unique(values, return_inverse=True)
    limit = clump_factor * max_columns
    if len(distinct) > limit:
        return equipartition(values, limit)
    return ranks.reshape(-1)


def _characteristic_max(p: np.ndarray, q: np.ndarray, budget: int, clump_factor: int) -> float:
    """Best normalized score with ``q`` equipartitioned and ``p`` optimized."""
    best = 0.0
    for q_bins in range(2, budget // 2 + 1):
        max_columns = budget // q_bins
        rows = equipartition(q, q_bins)
        groups = _column_groups(p, max_columns, clump_factor)
        information = _optimize_axis(groups, rows, max_columns)
        for columns in range(2, max_columns + 1):
            best = max(best, information[columns] / math.log2(min(columns, q_bins)))
    return best


def grid_budget(n: int, b_exponent: float = DEFAULT_B_EXPONENT) -> int:
    """Largest allowed cell count a*b; never below 4 so a 2x2 grid always fits."""
    return max(4, int(math.floor(n**b_exponent)))


def mic(
    x: Sequence[float],
    y: Sequence[float],
    b_exponent: float = DEFAULT_B_EXPONENT,
    clump_factor: int = CLUMP_FACTOR,
) -> float:
    """Maximal information coefficient of two series.

    For every grid size a x b with a, b >= 2 and a*b <= :func:`grid_budget`,
    one axis is equipartitioned and the cuts of the other are placed
    optimally between distinct values; both orientations are tried. The
    mutual information is normalized by log2(min(a, b)).

    Raises:
        ValueError: Lengths differ, non-finite values or fewer than 4 points.
    """
    x, y = _series_pair(x, y, 4)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    budget = grid_budget(len(x), b_exponent)
    score = max(
        _characteristic_max(x, y, budget, clump_factor),
        _characteristic_max(y, x, budget, clump_factor),
    )
    return float(min(1.0, max(0.0, score)))


@dataclass(frozen=True)
class DependenceReport:
    """Correlation and MIC of (cpu, bw_in, bw_out) against one noise target."""

    correlation: tuple[float, float, float]
    mic: tuple[float, float, float]
    n: int
    target: str = "noise-cpu"

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}; expected one of {TARGETS}")
        if any(not -1.0 <= r <= 1.0 for r in self.correlation):
            raise ValueError("correlations must lie in [-1, 1]")
        if any(not 0.0 <= m <= 1.0 for m in self.mic):
            raise ValueError("MIC values must lie in [0, 1]")

    def to_csv(self) -> str:
        rows = [
            REPORT_HEADER,
            "correlation," + ",".join(f"{r:.6f}" for r in self.correlation),
            "mic," + ",".join(f"{m:.6f}" for m in self.mic),
        ]
        return "\n".join(rows) + "\n"

    def to_table(self) -> Table:
        table = Table(title=f"Dependence on {self.target} (n={self.n})")
        table.add_column("")
        for title in COLUMN_TITLES:
            table.add_column(title, justify="right")
        table.add_row("Correlation", *(f"{r:.3f}" for r in self.correlation))
        table.add_row("MIC", *(f"{m:.3f}" for m in self.mic))
        return table


def parse_dependence_csv(text: str, n: int = 0, target: str = "noise-cpu") -> DependenceReport:
    """Read back a report written by :meth:`DependenceReport.to_csv`.

    Raises:
        ParseError: Wrong header, row names or numbers.
    """
    lines = [line.rstrip("\r") for line in text.split("\n") if line]
    if not lines or lines[0] != REPORT_HEADER:
        raise ParseError(f"expected header {REPORT_HEADER!r}", 1)
    stats = {}
    for line_number, line in enumerate(lines[1:], start=2):
        name, *cells = line.split(",")
        if name not in ("correlation", "mic") or len(cells) != 3:
            raise ParseError(f"unexpected row {line!r}", line_number)
        try:
            stats[name] = tuple(float(c) for c in cells)
        except ValueError as e:
            raise ParseError(f"not a number in {line!r}", line_number) from e
    if set(stats) != {"correlation", "mic"}:
        raise ParseError("report needs a correlation row and a mic row")
    return DependenceReport(stats["correlation"], stats["mic"], n, target)


def feature_noise_report(
    windows: Sequence[Window],
    target: str = "noise-cpu",
    noise_threshold: float = DEFAULT_NOISE_THRESHOLD,
    n_jobs: int = 1,
) -> DependenceReport:
    """Correlation and MIC of each feature against the noise-VM CPU or the label.

    Raises:
        ValueError: No windows or unknown target.
        UndefinedCorrelationError: A feature or the target is constant.
    """
    if not windows:
        raise ValueError("cannot analyze an empty window set")
    if target not in TARGETS:
        raise ValueError(f"unknown target {target!r}; expected one of {TARGETS}")
    features = np.array([w.features for w in windows], dtype=float)
    noise = np.array([w.noise_cpu for w in windows], dtype=float)
    signal = noise if target == "noise-cpu" else np.where(noise >= noise_threshold, 1.0, -1.0)

    correlation = tuple(pearson_correlation(features[:, j], signal) for j in range(len(FEATURE_NAMES)))
    mics = tuple(
        Parallel(n_jobs=n_jobs)(delayed(mic)(features[:, j], signal) for j in range(len(FEATURE_NAMES)))
    )
    logger.info("dependence on %s over %d windows: r=%s mic=%s", target, len(windows),
                ", ".join(f"{r:.3f}" for r in correlation), ", ".join(f"{m:.3f}" for m in mics))
    return DependenceReport(correlation, mics, len(windows), target)
