"""Soft-margin SVM with a Gaussian kernel, trained in the dual by SMO.

The decision function is ``f(x) = sum_i alpha_i y_i K(x_i, x) + b`` and the
training problem is

    max  sum_i alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j K(x_i, x_j)
    s.t. sum_i y_i alpha_i = 0,  0 <= alpha_i <= C.

Slack variables are never stored: a point's slack is
``max(0, 1 - y_i f(x_i))`` and only shows up through :func:`kkt_violation`.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from noisyneighbor.core.errors import ConfigError, ConvergenceError
from noisyneighbor.core.rng import substream
from noisyneighbor.core.telemetry import Instance

logger = logging.getLogger(__name__)

# Rows of the kernel matrix kept in memory during training.
DEFAULT_CACHE_ROWS = 1024
_PREDICT_CHUNK = 256


@dataclass(frozen=True)
class SvmHyperparams:
    """SMO settings. ``gamma=None`` means 1/d for d input features."""

    C: float = 3.8**2
    gamma: float | None = None
    kkt_tol: float = 1e-3
    alpha_eps: float = 1e-12
    max_passes: int = 10
    max_full_passes: int = 1000
    cache_rows: int = DEFAULT_CACHE_ROWS

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.kkt_tol > 0 or not self.alpha_eps > 0:
            raise ConfigError("kkt_tol and alpha_eps must be positive")
        if self.max_passes < 1 or self.max_full_passes < 1 or self.cache_rows < 1:
            raise ConfigError("max_passes, max_full_passes and cache_rows must be at least 1")

    def resolve_gamma(self, dim: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / dim


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Support vectors (alpha > 0 only), their alphas and labels, bias and kernel width."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    gamma: float
    C: float

    def __post_init__(self):
        for name in ("support_vectors", "alphas", "labels"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.support_vectors.ndim != 2:
            object.__setattr__(
                self, "support_vectors", self.support_vectors.reshape(len(self.alphas), -1)
            )

    @property
    def dim(self) -> int | None:
        return self.support_vectors.shape[1] if len(self.alphas) else None

    @property
    def n_support(self) -> int:
        return len(self.alphas)


def training_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    """Accept a sequence of Instances or an ``(X, y)`` pair and return float arrays."""
    if isinstance(data, tuple) and len(data) == 2:
        X, y = data
    else:
        X = [inst.features for inst in data]
        y = [inst.label for inst in data]
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("expected an (n, d) feature matrix and n labels")
    return X, y


def gaussian_kernel(u: Sequence[float], v: Sequence[float], gamma: float) -> float:
    """exp(-gamma * ||u - v||^2).

    Raises:
        ValueError: On dimension mismatch or negative gamma.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    diff = u - v
    return float(np.exp(-gamma * np.dot(diff, diff)))


def kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """Gaussian kernel between the rows of ``A`` and ``B`` (exact differences)."""
    diff = A[:, None, :] - B[None, :, :]
    return np.exp(-gamma * np.einsum("ijk,ijk->ij", diff, diff))


def decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """Signed scores for every row of ``X``.

    Raises:
        ValueError: If the row dimension differs from the support vectors'.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if model.n_support == 0:
        return np.full(len(X), model.bias)
    if X.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim} features, got {X.shape[1]}")
    coef = model.alphas * model.labels
    out = np.empty(len(X))
    for start in range(0, len(X), _PREDICT_CHUNK):
        block = X[start:start + _PREDICT_CHUNK]
        out[start:start + len(block)] = kernel_matrix(block, model.support_vectors, model.gamma) @ coef
    return out + model.bias


def decision_value(model: SvmModel, x: Sequence[float]) -> float:
    """Score of a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return float(decision_values(model, x[None, :])[0])


def predict(model: SvmModel, x: Sequence[float]) -> int:
    """+1 when the score is >= 0 (ties count as noisy), else -1."""
    return 1 if decision_value(model, x) >= 0 else -1


def predict_batch(model: SvmModel, X: np.ndarray) -> np.ndarray:
    return np.where(decision_values(model, X) >= 0, 1, -1)


def dual_objective(instances, alphas: Sequence[float], labels: Sequence[float], gamma: float) -> float:
    """Value of the kernelized dual objective.

    Args:
        instances: Feature vectors (``(n, d)`` array-like) or Instances.

    Raises:
        ValueError: On inconsistent lengths.
    """
    if len(instances) and isinstance(instances[0], Instance):
        X = np.array([inst.features for inst in instances], dtype=float)
    else:
        X = np.atleast_2d(np.asarray(instances, dtype=float))
    alphas = np.asarray(alphas, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if not len(X) == len(alphas) == len(labels):
        raise ValueError("instances, alphas and labels must have the same length")
    active = alphas != 0
    if not active.any():
        return 0.0
    coef = alphas[active] * labels[active]
    Xa = X[active]
    quad = coef @ kernel_matrix(Xa, Xa, gamma) @ coef
    return float(alphas.sum() - 0.5 * quad)


def _alphas_for_rows(model: SvmModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Recover per-row alphas by matching rows against the stored support vectors in order."""
    pending: dict[tuple[bytes, float], list[float]] = {}
    for sv, alpha, label in zip(model.support_vectors, model.alphas, model.labels):
        pending.setdefault((sv.tobytes(), float(label)), []).append(float(alpha))
    alphas = np.zeros(len(X))
    for i, (row, label) in enumerate(zip(X, y)):
        queue = pending.get((row.tobytes(), float(label)))
        if queue:
            alphas[i] = queue.pop(0)
    return alphas


def _violations(margins: np.ndarray, alphas: np.ndarray, C: float) -> np.ndarray:
    """Per-point KKT residual given y_i f(x_i)."""
    at_zero = alphas <= 0
    at_c = alphas >= C
    interior = ~(at_zero | at_c)
    residual = np.zeros_like(margins)
    residual[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    residual[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    residual[interior] = np.abs(margins[interior] - 1.0)
    return residual


def kkt_violation(model: SvmModel, instances) -> float:
    """Largest KKT residual over the training data the model was fitted on."""
    X, y = training_arrays(instances)
    if len(X) == 0:
        return 0.0
    alphas = _alphas_for_rows(model, X, y)
    margins = y * decision_values(model, X)
    return float(_violations(margins, alphas, model.C).max())


class _SmoSolver:
    """Platt's SMO with a full error cache and an LRU cache of kernel rows."""

    def __init__(self, X: np.ndarray, y: np.ndarray, h: SvmHyperparams, gamma: float, seed: int):
        self.X = X
        self.y = y
        self.n = len(y)
        self.C = float(h.C)
        self.gamma = gamma
        self.tol = h.kkt_tol
        self.alpha_eps = h.alpha_eps
        self.max_passes = h.max_passes
        self.max_full_passes = h.max_full_passes
        self.cache_rows = h.cache_rows
        self.rng = substream(seed, "smo")
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        self.errors = -y.copy()
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.steps = 0

    def kernel_row(self, i: int) -> np.ndarray:
        row = self._rows.get(i)
        if row is not None:
            self._rows.move_to_end(i)
            return row
        diff = self.X - self.X[i]
        row = np.exp(-self.gamma * np.einsum("ij,ij->i", diff, diff))
        self._rows[i] = row
        if len(self._rows) > self.cache_rows:
            self._rows.popitem(last=False)
        return row

    def _snap(self, a1: float, a2: float, s: float) -> tuple[float, float]:
        """Move roundoff-sized alphas onto the box, keeping a1 + s*a2 fixed."""
        tiny = 1e-12 * self.C
        if a2 < tiny:
            a1, a2 = a1 + s * a2, 0.0
        elif a2 > self.C - tiny:
            a1, a2 = a1 + s * (a2 - self.C), self.C
        if a1 < tiny:
            a1, a2 = 0.0, a2 + s * a1
        elif a1 > self.C - tiny:
            a1, a2 = self.C, a2 + s * (a1 - self.C)
        return min(max(a1, 0.0), self.C), min(max(a2, 0.0), self.C)

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        C = self.C
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if y1 != y2:
            low, high = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            low, high = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if low >= high:
            return False

        k1 = self.kernel_row(i1)
        k2 = self.kernel_row(i2)
        k11, k12, k22 = k1[i1], k1[i2], k2[i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = min(max(a2 + y2 * (e1 - e2) / eta, low), high)
        else:
            # Objective gain along the constraint line, evaluated at both ends.
            slope = y2 * (e1 - e2)
            gain_low = slope * (low - a2) - 0.5 * eta * (low - a2) ** 2
            gain_high = slope * (high - a2) - 0.5 * eta * (high - a2) ** 2
            if gain_low > gain_high + 1e-12:
                a2_new = low
            elif gain_high > gain_low + 1e-12:
                a2_new = high
            else:
                a2_new = a2
        if abs(a2_new - a2) <= self.alpha_eps:
            return False

        a1_new, a2_new = self._snap(a1 + s * (a2 - a2_new), a2_new, s)
        d1, d2 = a1_new - a1, a2_new - a2
        if abs(d1) <= self.alpha_eps and abs(d2) <= self.alpha_eps:
            return False

        b1 = self.b - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = self.b - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < a1_new < C:
            b_new = b1
        elif 0.0 < a2_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)

        self.errors += y1 * d1 * k1 + y2 * d2 * k2 + (b_new - self.b)
        self.alpha[i1], self.alpha[i2] = a1_new, a2_new
        self.b = b_new
        self.steps += 1
        return True

    def _rolled(self, indices: np.ndarray) -> np.ndarray:
        if len(indices) == 0:
            return indices
        return np.roll(indices, -int(self.rng.integers(len(indices))))

    def _nonbound(self) -> np.ndarray:
        return np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))

    def examine(self, i2: int) -> int:
        y2, a2 = self.y[i2], self.alpha[i2]
        r2 = self.errors[i2] * y2
        if not ((r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0)):
            return 0
        nonbound = self._nonbound()
        if len(nonbound) > 1:
            i1 = int(nonbound[np.argmax(np.abs(self.errors[nonbound] - self.errors[i2]))])
            if self.take_step(i1, i2):
                return 1
        for i1 in self._rolled(nonbound):
            if self.take_step(int(i1), i2):
                return 1
        for i1 in self._rolled(np.arange(self.n)):
            if self.take_step(int(i1), i2):
                return 1
        return 0

    def refresh_errors(self) -> None:
        """Recompute the error cache from scratch to shed accumulated drift."""
        self.errors = decision_values(self.model(), self.X) - self.y

    def max_violation(self) -> float:
        return float(_violations(self.y * (self.errors + self.y), self.alpha, self.C).max())

    def refine_bias(self) -> None:
        """Move b to the midpoint of its KKT-feasible interval if that lowers the worst residual."""
        g = self.errors + self.y - self.b
        at_zero = self.alpha <= 0
        at_c = self.alpha >= self.C
        interior = ~(at_zero | at_c)
        pos = self.y > 0
        lower = np.concatenate([
            (1.0 - g)[at_zero & pos], (-1.0 - g)[at_c & ~pos], (self.y - g)[interior],
        ])
        upper = np.concatenate([
            (-1.0 - g)[at_zero & ~pos], (1.0 - g)[at_c & pos], (self.y - g)[interior],
        ])
        if len(lower) and len(upper):
            candidate = 0.5 * (lower.max() + upper.min())
        elif len(lower):
            candidate = float(lower.max())
        elif len(upper):
            candidate = float(upper.min())
        else:
            return
        before = self.max_violation()
        shifted = self.errors + (candidate - self.b)
        after = float(_violations(self.y * (shifted + self.y), self.alpha, self.C).max())
        if after < before:
            self.errors = shifted
            self.b = float(candidate)

    def model(self) -> SvmModel:
        support = self.alpha > 0
        return SvmModel(
            support_vectors=self.X[support],
            alphas=self.alpha[support],
            labels=self.y[support],
            bias=float(self.b),
            gamma=self.gamma,
            C=self.C,
        )

    def run(self) -> SvmModel:
        examine_all = True
        stalled = 0
        passes = 0
        while True:
            changed = 0
            if examine_all:
                if passes >= self.max_full_passes:
                    self.refresh_errors()
                    violation = self.max_violation()
                    raise ConvergenceError(
                        f"SMO did not converge within {passes} full passes; "
                        f"max KKT violation {violation:.3g} > {self.tol}",
                        best_model=self.model(),
                        violation=violation,
                    )
                self.refresh_errors()
                for i in self._rolled(np.arange(self.n)):
                    changed += self.examine(int(i))
                passes += 1
                logger.debug("SMO full pass %d: %d updates, %d steps total", passes, changed, self.steps)
            else:
                for i in self._rolled(self._nonbound()):
                    changed += self.examine(int(i))

            if examine_all:
                if changed:
                    stalled = 0
                    examine_all = False
                    continue
                self.refresh_errors()
                self.refine_bias()
                violation = self.max_violation()
                if violation <= self.tol:
                    break
                stalled += 1
                logger.debug("SMO pass without progress (%d/%d), violation %.3g", stalled, self.max_passes, violation)
                if stalled >= self.max_passes:
                    raise ConvergenceError(
                        f"SMO stalled after {stalled} passes without progress; "
                        f"max KKT violation {violation:.3g} > {self.tol}",
                        best_model=self.model(),
                        violation=violation,
                    )
            elif changed == 0:
                examine_all = True

        model = self.model()
        logger.debug(
            "SMO converged: %d support vectors of %d, %d steps, %d full passes",
            model.n_support, self.n, self.steps, passes,
        )
        return model


def train_smo(instances, h: SvmHyperparams, seed: int = 0) -> SvmModel:
    """Train a soft-margin Gaussian-kernel SVM with SMO.

    Args:
        instances: Instances, or an ``(X, y)`` pair with labels in {-1, +1}.
        h: Hyperparameters.
        seed: Seed for the randomized loop start points.

    Raises:
        ValueError: Fewer than two classes, bad labels or non-finite features.
        ConvergenceError: No progress for ``h.max_passes`` full passes, or
            ``h.max_full_passes`` full passes in total.
    """
    X, y = training_arrays(instances)
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValueError("labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    gamma = h.resolve_gamma(X.shape[1])
    return _SmoSolver(X, y, h, gamma, seed).run()
