from dataclasses import replace
from itertools import combinations

import math

import numpy as np
import pytest

from noisyneighbor.core.analysis import (
    REPORT_HEADER,
    DependenceReport,
    equipartition,
    feature_noise_report,
    grid_budget,
    mic,
    parse_dependence_csv,
    pearson_correlation,
)
from noisyneighbor.core.errors import ParseError, UndefinedCorrelationError
from noisyneighbor.core.simulator import generate
from noisyneighbor.core.telemetry import aggregate_windows


def mutual_information(columns, rows):
    n = len(columns)
    table = np.zeros((columns.max() + 1, rows.max() + 1))
    np.add.at(table, (columns, rows), 1.0)
    p = table / n
    pc = p.sum(axis=1, keepdims=True)
    pr = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / (pc @ pr)[nz])))


def exhaustive_mic(x, y):
    """Equipartition one axis, try every cut set on the other, both ways.

    Checks the cut search, not the equipartition: both sides share it.
    """
    budget = grid_budget(len(x))
    best = 0.0
    for p, q in ((x, y), (y, x)):
        distinct = np.unique(p)
        for q_bins in range(2, budget // 2 + 1):
            rows = equipartition(q, q_bins)
            for c in range(2, budget // q_bins + 1):
                for cuts in combinations(distinct[1:], c - 1):
                    columns = np.searchsorted(np.array(cuts), p, side="right")
                    score = mutual_information(columns, rows) / math.log2(min(c, q_bins))
                    best = max(best, score)
    return min(1.0, best)


class TestPearson:
    def test_perfect_lines(self):
        x = np.arange(10.0)
        assert pearson_correlation(x, 3 * x + 1) == pytest.approx(1.0)
        assert pearson_correlation(x, -x) == pytest.approx(-1.0)

    def test_matches_numpy(self, rng):
        x, y = rng.normal(size=50), rng.normal(size=50)
        assert pearson_correlation(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1])

    def test_errors(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson_correlation([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            pearson_correlation([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            pearson_correlation([1.0], [1.0])


class TestEquipartition:
    def test_equal_mass(self):
        assert equipartition(np.arange(10.0), 5).tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]

    def test_ties_share_a_bin(self):
        assert equipartition([1, 1, 1, 1, 2, 3], 2).tolist() == [0, 0, 0, 0, 1, 1]

    def test_follows_value_order(self, rng):
        values = rng.normal(size=37)
        bins = equipartition(values, 6)
        order = np.argsort(values)
        assert np.all(np.diff(bins[order]) >= 0)
        assert bins.max() == 5

    def test_invalid_bins(self):
        with pytest.raises(ValueError):
            equipartition([1.0, 2.0], 0)


class TestMic:
    def test_budget(self):
        assert grid_budget(4) == 4
        assert grid_budget(9169) == 238

    def test_monotone_is_one(self):
        x = np.arange(40.0)
        assert mic(x, x**3) == pytest.approx(1.0)
        assert mic(x, -x) == pytest.approx(1.0)

    def test_constant_is_zero(self):
        assert mic(np.ones(10), np.arange(10.0)) == 0.0

    def test_symmetric_and_rank_invariant(self, rng):
        x, y = rng.normal(size=60), rng.normal(size=60)
        y = y + x**2
        assert mic(x, y) == mic(y, x)
        assert mic(np.exp(x), y) == pytest.approx(mic(x, y), abs=1e-12)

    def test_independent_series_score_low(self, rng):
        assert mic(rng.random(1000), rng.random(1000)) < 0.4

    def test_functional_beats_noise(self, rng):
        x = rng.uniform(-1, 1, size=200)
        assert mic(x, np.sin(6 * x)) > mic(x, rng.random(200)) + 0.3

    def test_matches_exhaustive_search(self, rng):
        for trial in range(50):
            n = int(rng.integers(4, 26))
            if trial % 2:
                x = rng.integers(0, 5, size=n).astype(float)
                y = rng.integers(0, 5, size=n).astype(float)
            else:
                x = rng.normal(size=n)
                y = x + rng.normal(scale=0.7, size=n)
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                continue
            assert mic(x, y) == pytest.approx(exhaustive_mic(x, y), abs=1e-9)

    def test_needs_four_points(self):
        with pytest.raises(ValueError):
            mic([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])


class TestReport:
    def test_range_checks(self):
        with pytest.raises(ValueError):
            DependenceReport((1.5, 0.0, 0.0), (0.0, 0.0, 0.0), 10)
        with pytest.raises(ValueError):
            DependenceReport((0.0, 0.0, 0.0), (0.0, 1.2, 0.0), 10)
        with pytest.raises(ValueError):
            DependenceReport((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 10, target="cpu")

    def test_csv(self):
        report = DependenceReport((0.5, -0.25, 0.125), (0.75, 0.5, 0.25), 40)
        text = report.to_csv()
        assert text.splitlines() == [
            REPORT_HEADER,
            "correlation,0.500000,-0.250000,0.125000",
            "mic,0.750000,0.500000,0.250000",
        ]
        assert parse_dependence_csv(text, n=40) == report
        assert report.to_table().row_count == 2

    @pytest.mark.parametrize(
        "text", ["", f"{REPORT_HEADER}\nmic,0,0,0\n", f"{REPORT_HEADER}\nr,0,0,0\nmic,0,0,0\n",
                 f"{REPORT_HEADER}\ncorrelation,a,0,0\nmic,0,0,0\n"],
    )
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            parse_dependence_csv(text)

    def test_feature_noise_report(self, small_scenario):
        samples, _ = generate(replace(small_scenario, sensor_noise_std=0.05))
        windows = aggregate_windows(samples, 30.0)
        report = feature_noise_report(windows)
        assert report.n == len(windows) == 40
        assert report.correlation[0] > 0.5
        assert report.correlation[2] < 0.0
        assert all(0.0 <= m <= 1.0 for m in report.mic)
        binary = feature_noise_report(windows, target="binary-label", n_jobs=2)
        assert binary.target == "binary-label"
        assert binary.mic[0] > 0.5

    def test_feature_noise_report_errors(self, small_scenario):
        with pytest.raises(ValueError):
            feature_noise_report([])
        windows = aggregate_windows(generate(small_scenario)[0], 30.0)
        with pytest.raises(ValueError):
            feature_noise_report(windows, target="latency")
