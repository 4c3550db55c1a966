"""File service for reading and writing the toolkit's documents."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from noisyneighbor.core.errors import ParseError
from noisyneighbor.core.file_utils import FileUtils
from noisyneighbor.core.telemetry import (
    Dataset,
    RawSample,
    emit_dataset_csv,
    emit_samples_csv,
    parse_dataset_csv,
    parse_samples,
)

logger = logging.getLogger(__name__)

PREDICTIONS_HEADER = "window_start_s,label"


def emit_predictions_csv(window_starts: Sequence[float], labels: Sequence[int]) -> str:
    """One ``window_start_s,label`` row per window."""
    if len(window_starts) != len(labels):
        raise ValueError("window starts and labels must have the same length")
    rows = [PREDICTIONS_HEADER]
    rows.extend(f"{float(start)!r},{int(label)}" for start, label in zip(window_starts, labels))
    return "\n".join(rows) + "\n"


def parse_predictions_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`emit_predictions_csv`.

    Raises:
        ParseError: Wrong header, column count, number or label.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != PREDICTIONS_HEADER:
        raise ParseError(f"expected header {PREDICTIONS_HEADER!r}", 1)
    starts, labels = [], []
    for line_number, line in enumerate(lines[1:], start=2):
        tokens = line.rstrip("\r").split(",")
        if len(tokens) != 2 or tokens[1] not in ("1", "-1"):
            raise ParseError(f"expected 'start,label' with label -1 or 1, got {line!r}", line_number)
        try:
            starts.append(float(tokens[0]))
        except ValueError as e:
            raise ParseError(f"not a number: {tokens[0]!r}", line_number) from e
        labels.append(int(tokens[1]))
    return np.array(starts, dtype=float), np.array(labels, dtype=int)


class FileService:
    """Service for file operations."""

    def __init__(self, default_output_dir: Path | None = None):
        """Initialize file service.

        Args:
            default_output_dir: Directory for outputs written without an explicit path
        """
        self.default_output_dir = default_output_dir or Path("data")

    def validate_input_file(self, file_path: Path | str) -> tuple[bool, str]:
        """
        Validate that an input file exists and is readable.

        Returns:
            Tuple of (is_valid, error_message)
        """
        path = Path(file_path)
        if not path.exists():
            return False, f"File not found: {path}"
        if not path.is_file():
            return False, f"Path is not a file: {path}"
        if not FileUtils.validate_file(path):
            return False, f"File is empty or unreadable: {path}"
        return True, ""

    def resolve_output(self, output_path: Path | str | None, default_name: str) -> Path:
        """Use ``output_path`` as given, or ``default_name`` under the default output directory."""
        path = Path(output_path) if output_path else self.default_output_dir / default_name
        return FileUtils.ensure_output_path(path)

    def read_text(self, file_path: Path | str) -> str:
        """Read a document after validating the path.

        Raises:
            FileNotFoundError: Missing, non-regular or empty file.
        """
        valid, message = self.validate_input_file(file_path)
        if not valid:
            raise FileNotFoundError(message)
        return FileUtils.read_text_file(file_path)

    def write_text(self, output_path: Path | str, text: str) -> Path:
        path = FileUtils.write_text_file(output_path, text)
        logger.info("wrote %s", path)
        return path

    def read_samples(self, file_path: Path | str) -> list[RawSample]:
        samples = parse_samples(self.read_text(file_path))
        logger.debug("read %d samples from %s", len(samples), file_path)
        return samples

    def write_samples(self, output_path: Path | str, samples: Sequence[RawSample]) -> Path:
        return self.write_text(output_path, emit_samples_csv(samples))

    def read_dataset(self, file_path: Path | str) -> Dataset:
        dataset = parse_dataset_csv(self.read_text(file_path), provenance=str(file_path))
        logger.debug("read %d windows from %s", len(dataset), file_path)
        return dataset

    def write_dataset(self, output_path: Path | str, dataset: Dataset) -> Path:
        return self.write_text(output_path, emit_dataset_csv(dataset))
