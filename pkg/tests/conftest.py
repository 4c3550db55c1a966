"""Shared fixtures."""

import logging

import numpy as np
import pytest

from noisyneighbor.core.simulator import NoiseInterval, ScenarioConfig
from noisyneighbor.core.telemetry import Dataset, Instance


def make_dataset(X, y, start: float = 0.0, step: float = 30.0) -> Dataset:
    """Wrap a feature matrix and labels as a Dataset with evenly spaced windows."""
    return Dataset(
        tuple(
            Instance(start + i * step, tuple(float(v) for v in row), int(label))
            for i, (row, label) in enumerate(zip(np.asarray(X, dtype=float), y))
        )
    )


@pytest.fixture(autouse=True)
def _package_logger_propagates():
    """Undo the CLI logging setup so caplog sees package records."""
    yield
    logger = logging.getLogger("noisyneighbor")
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def separable_dataset(rng):
    """Two well separated clusters in (cpu, bw_in, bw_out) space."""
    quiet = rng.normal((40.0, 450_000.0, 550_000.0), (1.0, 5_000.0, 5_000.0), size=(40, 3))
    noisy = rng.normal((60.0, 450_000.0, 420_000.0), (1.0, 5_000.0, 5_000.0), size=(40, 3))
    X = np.vstack([quiet, noisy])
    y = np.array([-1] * 40 + [1] * 40)
    order = rng.permutation(len(y))
    return make_dataset(X[order], y[order])


@pytest.fixture
def small_scenario():
    """Twenty minutes at 10 s with two noise bursts."""
    return ScenarioConfig(
        duration=1200.0,
        sample_period=10.0,
        noise_schedule=(NoiseInterval(300.0, 600.0, 0.8), NoiseInterval(900.0, 1050.0, 1.0)),
        seed=5,
    )


@pytest.fixture
def dataset_factory():
    return make_dataset
