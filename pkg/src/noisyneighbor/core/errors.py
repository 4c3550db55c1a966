"""Exception hierarchy for the toolkit."""

from __future__ import annotations

from typing import Any


class NoisyNeighborError(Exception):
    """Base class for every error raised deliberately by this package."""


class ParseError(NoisyNeighborError, ValueError):
    """Malformed input document."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class OrderingError(ParseError):
    """Timestamps in a telemetry stream are not strictly increasing."""


class ConfigError(NoisyNeighborError, ValueError):
    """Invalid scenario configuration or hyperparameters."""


class ModelFileError(NoisyNeighborError, ValueError):
    """Model file with an unsupported version or inconsistent payload."""


class ConvergenceError(NoisyNeighborError, RuntimeError):
    """SMO gave up before reaching the KKT tolerance.

    Attributes:
        best_model: The last iterate, packaged as a model.
        violation: Its maximum KKT violation.
    """

    def __init__(self, message: str, best_model: Any, violation: float):
        super().__init__(message)
        self.best_model = best_model
        self.violation = violation

    def __reduce__(self):
        return (type(self), (self.args[0], self.best_model, self.violation))


class EvaluationError(NoisyNeighborError, RuntimeError):
    """A cross-validation fold could not be evaluated."""

    def __init__(self, message: str, fold: int):
        super().__init__(f"fold {fold}: {message}")
        self.fold = fold
        self.detail = message

    def __reduce__(self):
        return (type(self), (self.detail, self.fold))


class UndefinedCorrelationError(NoisyNeighborError, ValueError):
    """Pearson correlation requested for a constant series."""
