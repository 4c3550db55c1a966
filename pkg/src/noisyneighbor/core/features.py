"""Standardization and quadratic feature expansion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from noisyneighbor.core.telemetry import Instance

EXPANSIONS = ("none", "quadratic")
FLAT_STD_RTOL = 1e-12


@dataclass(frozen=True)
class Standardizer:
    """Per-feature mean and sample standard deviation."""

    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        if len(self.means) != len(self.stds):
            raise ValueError("means and stds must have the same dimension")
        if any(s < 0 for s in self.stds):
            raise ValueError("stds must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.means)

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Standardize the rows of ``X``; zero-std columns map to 0."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[-1]}")
        means = np.asarray(self.means)
        stds = np.asarray(self.stds)
        safe = np.where(stds > 0, stds, 1.0)
        return np.where(stds > 0, (X - means) / safe, 0.0)


def fit_standardizer_matrix(X: np.ndarray) -> Standardizer:
    """Fit on the rows of a feature matrix (divisor n-1, std 0 for one row)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a standardizer on an empty set")
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    # A flat column whose value is not exactly representable still has roundoff std.
    flat = (np.ptp(X, axis=0) == 0) | (stds <= FLAT_STD_RTOL * np.maximum(1.0, np.abs(means)))
    stds = np.where(flat, 0.0, stds)
    return Standardizer(tuple(float(m) for m in means), tuple(float(s) for s in stds))


def fit_standardizer(instances: Sequence[Instance]) -> Standardizer:
    """Fit a standardizer on the instances' feature vectors.

    Raises:
        ValueError: If ``instances`` is empty.
    """
    if not instances:
        raise ValueError("cannot fit a standardizer on an empty set")
    return fit_standardizer_matrix(np.array([inst.features for inst in instances], dtype=float))


def apply_standardizer(s: Standardizer, x: Sequence[float]) -> np.ndarray:
    """Standardize one feature vector.

    Raises:
        ValueError: On dimension mismatch.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return s.transform(x)


def quadratic_expand_matrix(X: np.ndarray) -> np.ndarray:
    """Row-wise (x1, x2, x3, x1², x2², x3², x1x2, x1x3, x2x3)."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != 3:
        raise ValueError(f"quadratic expansion needs 3 features, got {X.shape[-1]}")
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    return np.stack([x1, x2, x3, x1 * x1, x2 * x2, x3 * x3, x1 * x2, x1 * x3, x2 * x3], axis=-1)


def quadratic_expand(x: Sequence[float]) -> np.ndarray:
    """Expand one 3-vector into its 9 linear and quadratic terms.

    Raises:
        ValueError: If ``x`` does not have exactly 3 components.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError(f"quadratic expansion needs a 3-vector, got shape {x.shape}")
    return quadratic_expand_matrix(x)


def expand(X: np.ndarray, expansion: str) -> np.ndarray:
    """Apply a named expansion (``none`` or ``quadratic``) row-wise."""
    if expansion == "none":
        return np.asarray(X, dtype=float)
    if expansion == "quadratic":
        return quadratic_expand_matrix(X)
    raise ValueError(f"unknown expansion {expansion!r}; expected one of {EXPANSIONS}")
