"""Raw telemetry parsing, tumbling-window aggregation and noise labelling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from noisyneighbor.core.errors import OrderingError, ParseError

logger = logging.getLogger(__name__)

RAW_HEADER = "timestamp_s,cpu_util_pct,bw_in_bps,bw_out_bps,noise_cpu_pct"
DATASET_HEADER = "window_start_s,cpu_util_pct,bw_in_bps,bw_out_bps,label"
FEATURE_NAMES = ("cpu_util", "bw_in", "bw_out")

DEFAULT_WINDOW_LEN = 30.0
DEFAULT_NOISE_THRESHOLD = 5.0

NOISY = 1
QUIET = -1


@dataclass(frozen=True, slots=True)
class RawSample:
    """One timestamped telemetry reading of the monitored server VM."""

    timestamp: float
    cpu_util: float
    bw_in: float
    bw_out: float
    noise_cpu: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"non-finite value in sample {self.as_tuple()}")
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.timestamp}")
        if not 0.0 <= self.cpu_util <= 100.0:
            raise ValueError(f"cpu_util out of [0,100]: {self.cpu_util}")
        if not 0.0 <= self.noise_cpu <= 100.0:
            raise ValueError(f"noise_cpu out of [0,100]: {self.noise_cpu}")
        if self.bw_in < 0 or self.bw_out < 0:
            raise ValueError(f"bandwidth must be non-negative: in={self.bw_in} out={self.bw_out}")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.timestamp, self.cpu_util, self.bw_in, self.bw_out, self.noise_cpu)


@dataclass(frozen=True, slots=True)
class Window:
    """An aggregated window before labelling; keeps the noise-VM CPU mean."""

    window_start: float
    features: tuple[float, float, float]
    noise_cpu: float
    sample_count: int


@dataclass(frozen=True, slots=True)
class Instance:
    """One labelled window: mean (cpu, bw_in, bw_out) and +1 noisy / -1 quiet.

    ``sample_count`` is not carried by the dataset CSV, so it is excluded from
    equality.
    """

    window_start: float
    features: tuple[float, float, float]
    label: int
    sample_count: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.label not in (NOISY, QUIET):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")


@dataclass(frozen=True)
class Dataset:
    """Ordered labelled instances from one source."""

    instances: tuple[Instance, ...]
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @cached_property
    def features(self) -> np.ndarray:
        """``(n, 3)`` float matrix of window means."""
        if not self.instances:
            return np.empty((0, len(FEATURE_NAMES)))
        return np.array([inst.features for inst in self.instances], dtype=float)

    @cached_property
    def labels(self) -> np.ndarray:
        """``(n,)`` int vector of labels in {-1, +1}."""
        return np.array([inst.label for inst in self.instances], dtype=int)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.instances[i] for i in indices), self.provenance)


def _parse_float(token: str, column: str, line_number: int) -> float:
    try:
        value = float(token)
    except ValueError as e:
        raise ParseError(f"{column}: not a number: {token!r}", line_number) from e
    if not math.isfinite(value):
        raise ParseError(f"{column}: not finite: {token!r}", line_number)
    return value


def _data_lines(text: str, header: str) -> Iterable[tuple[int, str]]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != header:
        raise ParseError(f"expected header {header!r}", 1)
    for line_number, line in enumerate(lines[1:], start=2):
        yield line_number, line.rstrip("\r")


def parse_samples(text: str) -> list[RawSample]:
    """Parse the raw telemetry CSV.

    Args:
        text: Document starting with :data:`RAW_HEADER`.

    Returns:
        Samples in file order.

    Raises:
        ParseError: Wrong header, wrong column count, non-numeric or
            out-of-range field (message names the line).
        OrderingError: Timestamps not strictly increasing.
    """
    columns = RAW_HEADER.split(",")
    samples: list[RawSample] = []
    previous: float | None = None
    for line_number, line in _data_lines(text, RAW_HEADER):
        tokens = line.split(",")
        if len(tokens) != len(columns):
            raise ParseError(f"expected {len(columns)} columns, got {len(tokens)}", line_number)
        values = [_parse_float(tok, col, line_number) for tok, col in zip(tokens, columns)]
        try:
            sample = RawSample(*values)
        except ValueError as e:
            raise ParseError(str(e), line_number) from e
        if previous is not None and sample.timestamp <= previous:
            raise OrderingError(
                f"timestamp {sample.timestamp!r} does not increase (previous {previous!r})",
                line_number,
            )
        previous = sample.timestamp
        samples.append(sample)
    return samples


def emit_samples_csv(samples: Iterable[RawSample]) -> str:
    """Render samples in the raw telemetry CSV format (shortest round-trip floats)."""
    rows = [RAW_HEADER]
    rows.extend(",".join(repr(float(v)) for v in s.as_tuple()) for s in samples)
    return "\n".join(rows) + "\n"


def window_means(frame: pd.DataFrame, window_len: float) -> tuple[pd.DataFrame, pd.Series]:
    """Group ``frame`` rows into tumbling windows by its ``timestamp`` column.

    Returns the per-window mean of every other column, clipped to that
    window's sample min and max, and the per-window sample count. Both are
    indexed by window number.
    """
    index = np.floor(frame["timestamp"].to_numpy() / window_len).astype(np.int64)
    grouped = frame.drop(columns="timestamp").groupby(index, sort=True)
    stats = grouped.agg(["mean", "min", "max"])
    columns = [c for c in frame.columns if c != "timestamp"]
    means = pd.DataFrame(
        {c: stats[(c, "mean")].clip(stats[(c, "min")], stats[(c, "max")]) for c in columns},
        index=stats.index,
    )
    return means, grouped.size()


def aggregate_windows(samples: Sequence[RawSample], window_len: float = DEFAULT_WINDOW_LEN) -> list[Window]:
    """Average samples over tumbling windows aligned to multiples of ``window_len``.

    Windows without samples are omitted, not zero-filled.

    Raises:
        ValueError: If ``window_len`` is not positive.
    """
    if not window_len > 0:
        raise ValueError(f"window_len must be positive, got {window_len}")
    if not samples:
        return []

    frame = pd.DataFrame(
        [s.as_tuple() for s in samples],
        columns=["timestamp", "cpu_util", "bw_in", "bw_out", "noise_cpu"],
    )
    means, counts = window_means(frame, window_len)

    windows = [
        Window(
            window_start=float(index * window_len),
            features=(float(row.cpu_util), float(row.bw_in), float(row.bw_out)),
            noise_cpu=float(row.noise_cpu),
            sample_count=int(counts.loc[index]),
        )
        for index, row in means.iterrows()
    ]
    logger.debug("aggregated %d samples into %d windows of %ss", len(samples), len(windows), window_len)
    return windows


def label_windows(
    windows: Iterable[Window],
    noise_threshold: float = DEFAULT_NOISE_THRESHOLD,
    provenance: str = "",
) -> Dataset:
    """Label each window +1 iff its mean noise-VM CPU is at least ``noise_threshold``.

    The noise-VM CPU is ground truth and is dropped from the features.

    Raises:
        ValueError: If the threshold is outside (0, 100).
    """
    if not 0.0 < noise_threshold < 100.0:
        raise ValueError(f"noise_threshold must lie in (0, 100), got {noise_threshold}")
    instances = tuple(
        Instance(
            window_start=w.window_start,
            features=w.features,
            label=NOISY if w.noise_cpu >= noise_threshold else QUIET,
            sample_count=w.sample_count,
        )
        for w in windows
    )
    return Dataset(instances, provenance)


def dataset_summary(dataset: Dataset) -> tuple[int, int]:
    """Return ``(total, positives)``."""
    return len(dataset), sum(1 for inst in dataset if inst.label == NOISY)


def emit_dataset_csv(dataset: Dataset) -> str:
    """Render a labelled dataset CSV."""
    rows = [DATASET_HEADER]
    for inst in dataset:
        cells = [repr(float(inst.window_start))]
        cells.extend(repr(float(v)) for v in inst.features)
        cells.append(str(inst.label))
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def parse_dataset_csv(text: str, provenance: str = "") -> Dataset:
    """Parse a labelled dataset CSV.

    Raises:
        ParseError: Wrong header, column count, number or label.
        OrderingError: Window starts not strictly increasing.
    """
    columns = DATASET_HEADER.split(",")
    instances: list[Instance] = []
    previous: float | None = None
    for line_number, line in _data_lines(text, DATASET_HEADER):
        tokens = line.split(",")
        if len(tokens) != len(columns):
            raise ParseError(f"expected {len(columns)} columns, got {len(tokens)}", line_number)
        start, cpu, bw_in, bw_out = (
            _parse_float(tok, col, line_number) for tok, col in zip(tokens[:4], columns)
        )
        if tokens[4] not in ("1", "-1"):
            raise ParseError(f"label must be -1 or 1, got {tokens[4]!r}", line_number)
        if previous is not None and start <= previous:
            raise OrderingError(f"window_start {start!r} does not increase", line_number)
        previous = start
        instances.append(Instance(start, (cpu, bw_in, bw_out), int(tokens[4])))
    return Dataset(tuple(instances), provenance)
