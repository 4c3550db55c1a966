import numpy as np
import pytest

from noisyneighbor.core.errors import OrderingError, ParseError
from noisyneighbor.core.telemetry import (
    DATASET_HEADER,
    RAW_HEADER,
    Dataset,
    Instance,
    RawSample,
    Window,
    aggregate_windows,
    dataset_summary,
    emit_dataset_csv,
    emit_samples_csv,
    label_windows,
    parse_dataset_csv,
    parse_samples,
)


def sample(t, cpu=40.0, bw_in=1000.0, bw_out=900.0, noise=0.0):
    return RawSample(float(t), cpu, bw_in, bw_out, noise)


class TestParseSamples:
    def test_single_row(self):
        samples = parse_samples(f"{RAW_HEADER}\n0,40.0,1000,900,0.0\n")
        assert samples == [RawSample(0.0, 40.0, 1000.0, 900.0, 0.0)]

    def test_header_only(self):
        assert parse_samples(RAW_HEADER + "\n") == []

    def test_non_numeric_field_names_line(self):
        text = f"{RAW_HEADER}\n0,40,0,0,0\n10,abc,0,0,0\n"
        with pytest.raises(ParseError, match="line 3") as info:
            parse_samples(text)
        assert info.value.line_number == 3

    def test_wrong_column_count(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_samples(f"{RAW_HEADER}\n0,40,0,0\n")

    def test_wrong_header(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_samples("t,cpu,in,out,noise\n0,1,2,3,4\n")

    def test_non_increasing_timestamps(self):
        text = f"{RAW_HEADER}\n10,40,0,0,0\n10,41,0,0,0\n"
        with pytest.raises(OrderingError) as info:
            parse_samples(text)
        assert info.value.line_number == 3

    def test_out_of_range_cpu_is_a_parse_error(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_samples(f"{RAW_HEADER}\n0,140,0,0,0\n")

    def test_crlf_lines_are_accepted(self):
        samples = parse_samples(f"{RAW_HEADER}\r\n0,40,1,2,3\r\n")
        assert samples[0].noise_cpu == 3.0

    def test_round_trip_is_bit_identical(self, rng):
        original = [
            RawSample(t * 10.0 + rng.random(), rng.uniform(0, 100), rng.uniform(0, 1e6), rng.uniform(0, 1e6), 0.0)
            for t in range(50)
        ]
        text = emit_samples_csv(original)
        parsed = parse_samples(text)
        assert parsed == original
        assert emit_samples_csv(parsed) == text


class TestRawSample:
    @pytest.mark.parametrize(
        "values",
        [(-1, 40, 0, 0, 0), (0, 101, 0, 0, 0), (0, 40, -1, 0, 0), (0, 40, 0, 0, 100.5), (0, float("nan"), 0, 0, 0)],
    )
    def test_invariants(self, values):
        with pytest.raises(ValueError):
            RawSample(*values)


class TestAggregateWindows:
    def test_mean_of_one_window(self):
        windows = aggregate_windows([sample(0, 30), sample(10, 40), sample(20, 50)], 30.0)
        assert len(windows) == 1
        assert windows[0].features[0] == pytest.approx(40.0)
        assert windows[0].sample_count == 3

    def test_singleton_window_is_aligned(self):
        (window,) = aggregate_windows([sample(35, 12.5)], 30.0)
        assert window.window_start == 30.0
        assert window.features == (12.5, 1000.0, 900.0)

    def test_empty_windows_are_omitted(self):
        windows = aggregate_windows([sample(0), sample(70)], 30.0)
        assert [w.window_start for w in windows] == [0.0, 60.0]

    def test_empty_input(self):
        assert aggregate_windows([], 30.0) == []

    @pytest.mark.parametrize("window_len", [0.0, -30.0])
    def test_rejects_non_positive_window(self, window_len):
        with pytest.raises(ValueError):
            aggregate_windows([sample(0)], window_len)

    def test_no_sample_lost_and_means_bounded(self, rng):
        times = np.cumsum(rng.uniform(1, 20, size=300))
        samples = [
            sample(t, rng.uniform(0, 100), rng.uniform(0, 1e5), rng.uniform(0, 1e5), rng.uniform(0, 100))
            for t in times
        ]
        windows = aggregate_windows(samples, 30.0)
        assert sum(w.sample_count for w in windows) == len(samples)
        for w in windows:
            members = [s for s in samples if w.window_start <= s.timestamp < w.window_start + 30.0]
            assert len(members) == w.sample_count
            for position, name in enumerate(("cpu_util", "bw_in", "bw_out")):
                values = [getattr(s, name) for s in members]
                assert min(values) <= w.features[position] <= max(values)
            assert min(s.noise_cpu for s in members) <= w.noise_cpu <= max(s.noise_cpu for s in members)
            assert w.features[2] == pytest.approx(np.mean([s.bw_out for s in members]))

    @pytest.mark.parametrize("value", [0.1, 0.7, 99.9, 5.0])
    def test_equal_samples_average_to_themselves(self, value):
        samples = [sample(t, value, value, value, value) for t in (1.0, 11.0, 21.0)]
        (window,) = aggregate_windows(samples, 30.0)
        assert window.features == (value, value, value)
        assert window.noise_cpu == value


class TestLabelWindows:
    def window(self, noise):
        return Window(0.0, (40.0, 1.0, 1.0), noise, 3)

    @pytest.mark.parametrize("noise, label", [(0.0, -1), (80.0, 1), (5.0, 1), (4.999, -1)])
    def test_threshold_rule(self, noise, label):
        (instance,) = label_windows([self.window(noise)], 5.0).instances
        assert instance.label == label
        assert instance.features == (40.0, 1.0, 1.0)

    @pytest.mark.parametrize("threshold", [0.0, 100.0, -2.0])
    def test_threshold_range(self, threshold):
        with pytest.raises(ValueError):
            label_windows([self.window(1.0)], threshold)

    def test_order_independent(self):
        windows = [Window(float(i * 30), (1.0, 2.0, 3.0), float(i * 3), 1) for i in range(6)]
        forward = label_windows(windows).instances
        backward = label_windows(list(reversed(windows))).instances
        assert sorted(forward, key=lambda i: i.window_start) == sorted(backward, key=lambda i: i.window_start)


class TestDatasets:
    def test_summary(self):
        instances = tuple(Instance(float(i), (0.0, 0.0, 0.0), label) for i, label in enumerate((1, 1, -1)))
        assert dataset_summary(Dataset(instances)) == (3, 2)
        assert dataset_summary(Dataset(())) == (0, 0)

    def test_csv_round_trip(self, separable_dataset):
        text = emit_dataset_csv(separable_dataset)
        assert text.startswith(DATASET_HEADER + "\n")
        parsed = parse_dataset_csv(text)
        assert parsed == separable_dataset
        assert np.array_equal(parsed.features, separable_dataset.features)

    def test_bad_label(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_dataset_csv(f"{DATASET_HEADER}\n0,1,2,3,0\n")

    def test_subset_and_arrays(self, separable_dataset):
        part = separable_dataset.subset([0, 2])
        assert len(part) == 2
        assert part.features.shape == (2, 3)
        assert set(part.labels) <= {-1, 1}
