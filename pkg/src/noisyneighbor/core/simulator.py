"""Deterministic synthetic telemetry for a VoIP-like server with CPU noise VMs.

The server runs at a steady load; noise VMs switch on for scheduled
intervals. While they run, the server's CPU rises and its outbound traffic
drops through a saturating contention response. Traffic may also vary between
experiment segments, which moves CPU and bandwidth together and keeps any
single metric from being a reliable noise indicator on its own. Within a
segment the workload mix drifts slowly, so CPU cost and outbound bytes per
call are not fixed multiples of the inbound traffic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from noisyneighbor.core.errors import ConfigError
from noisyneighbor.core.rng import substream
from noisyneighbor.core.settings import Settings
from noisyneighbor.core.telemetry import DEFAULT_NOISE_THRESHOLD, NOISY, QUIET, RawSample, window_means

logger = logging.getLogger(__name__)

BENCHMARK_VERSION = 1


class NoiseShape(str, Enum):
    ONE_LARGE_VM = "one-large-vm"
    MANY_SMALL_VMS = "many-small-vms"


@dataclass(frozen=True)
class NoiseInterval:
    start: float
    end: float
    intensity: float


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines a generated telemetry stream."""

    duration: float = 3600.0
    sample_period: float = 10.0
    jitter_frac: float = 0.0
    dropout_prob: float = 0.0
    base_cpu: float = 40.0
    traffic_rate: float = 50.0
    noise_schedule: tuple[NoiseInterval, ...] = ()
    noise_shape: NoiseShape = NoiseShape.ONE_LARGE_VM
    noise_vm_count: int = 24
    contention_gain: float = 0.25
    sensor_noise_std: float = 0.0
    seed: int = 0
    bytes_per_call_in: float = 9000.0
    bytes_per_call_out: float = 11000.0
    segment_len: float | None = None
    traffic_variation: float = 0.0
    mix_variation: float = 0.0
    mix_correlation: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "noise_schedule", tuple(self.noise_schedule))
        object.__setattr__(self, "noise_shape", NoiseShape(self.noise_shape))

    def validate(self) -> None:
        """Check the config invariants.

        Raises:
            ConfigError: On the first violated invariant.
        """
        if not self.duration > 0 or not self.sample_period > 0:
            raise ConfigError("duration and sample_period must be positive")
        if not 0.0 <= self.jitter_frac < 1.0:
            raise ConfigError(f"jitter_frac must lie in [0, 1), got {self.jitter_frac}")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigError(f"dropout_prob must lie in [0, 1], got {self.dropout_prob}")
        if not 0.0 <= self.base_cpu <= 100.0:
            raise ConfigError(f"base_cpu must lie in [0, 100], got {self.base_cpu}")
        if self.traffic_rate < 0 or self.bytes_per_call_in < 0 or self.bytes_per_call_out < 0:
            raise ConfigError("traffic_rate and per-call bandwidths must be non-negative")
        if self.contention_gain < 0 or self.sensor_noise_std < 0:
            raise ConfigError("contention_gain and sensor_noise_std must be non-negative")
        if not 0.0 <= self.traffic_variation < 1.0:
            raise ConfigError(f"traffic_variation must lie in [0, 1), got {self.traffic_variation}")
        if not 0.0 <= self.mix_variation < 0.5:
            raise ConfigError(f"mix_variation must lie in [0, 0.5), got {self.mix_variation}")
        if not 0.0 <= self.mix_correlation < 1.0:
            raise ConfigError(f"mix_correlation must lie in [0, 1), got {self.mix_correlation}")
        if self.segment_len is not None and not self.segment_len > 0:
            raise ConfigError("segment_len must be positive")
        if self.noise_shape is NoiseShape.MANY_SMALL_VMS and not 18 <= self.noise_vm_count <= 24:
            raise ConfigError(f"noise_vm_count must lie in [18, 24], got {self.noise_vm_count}")
        previous_end = 0.0
        for interval in sorted(self.noise_schedule, key=lambda iv: iv.start):
            if not 0.0 <= interval.start < interval.end <= self.duration:
                raise ConfigError(f"noise interval {interval} outside [0, {self.duration}]")
            if interval.start < previous_end:
                raise ConfigError(f"noise interval {interval} overlaps its predecessor")
            if not 0.0 <= interval.intensity <= 1.0:
                raise ConfigError(f"noise intensity must lie in [0, 1], got {interval.intensity}")
            previous_end = interval.end


@dataclass(frozen=True)
class GroundTruth:
    """The schedule that was simulated and the noise-VM CPU it produced.

    ``noise_cpu`` is what the sensor reported; ``scheduled_cpu`` is the
    noise-VM CPU the schedule implies at the same kept sample instants.
    """

    noise_schedule: tuple[NoiseInterval, ...]
    noise_cpu: tuple[float, ...] = field(repr=False)
    sample_times: tuple[float, ...] = field(default=(), repr=False)
    scheduled_cpu: tuple[float, ...] = field(default=(), repr=False)

    def window_labels(
        self,
        window_len: float,
        window_starts,
        noise_threshold: float = DEFAULT_NOISE_THRESHOLD,
    ) -> dict[float, int]:
        """Window-level truth: +1 iff the scheduled noise-VM CPU averages at least the threshold.

        Averages over the kept samples of each window, the same way
        :func:`aggregate_windows` does; a window without samples is quiet.
        """
        labels = {start: QUIET for start in window_starts}
        if not self.sample_times:
            return labels
        frame = pd.DataFrame({"timestamp": self.sample_times, "scheduled_cpu": self.scheduled_cpu})
        means, _ = window_means(frame, window_len)
        scheduled = {float(index * window_len): float(v) for index, v in means["scheduled_cpu"].items()}
        for start in labels:
            if scheduled.get(start, 0.0) >= noise_threshold:
                labels[start] = NOISY
        return labels


def saturate(z):
    """z / (1 + z): monotone, 0 at 0, 1/2 at 1."""
    return z / (1.0 + z)


def _intensity_at(times: np.ndarray, schedule: tuple[NoiseInterval, ...]) -> np.ndarray:
    intensity = np.zeros_like(times)
    for interval in schedule:
        inside = (times >= interval.start) & (times < interval.end)
        intensity[inside] = interval.intensity
    return intensity


def _mix_drift(rng: np.random.Generator, n: int, std: float, phi: float) -> np.ndarray:
    """Stationary AR(1) relative drift with standard deviation ``std`` and lag-one correlation ``phi``."""
    shocks = rng.standard_normal(n)
    drift = np.empty(n)
    if n == 0:
        return drift
    innovation = std * np.sqrt(1.0 - phi * phi)
    drift[0] = std * shocks[0]
    for k in range(1, n):
        drift[k] = phi * drift[k - 1] + innovation * shocks[k]
    # Keeps per-call costs positive.
    return np.maximum(drift, -0.9)


def generate(config: ScenarioConfig) -> tuple[list[RawSample], GroundTruth]:
    """Generate a telemetry stream and its ground truth.

    Each metric draws from its own substream of ``config.seed``, and every
    stream is drawn at full nominal length before dropout is applied, so the
    output is bit-identical for identical configs.

    Raises:
        ConfigError: If the config is invalid (before any generation).
    """
    config.validate()
    n = int(np.ceil(config.duration / config.sample_period - 1e-9))
    nominal = np.arange(n, dtype=float) * config.sample_period

    jitter = substream(config.seed, "sim", "jitter").random(n)
    times = nominal + jitter * config.jitter_frac * config.sample_period
    kept = substream(config.seed, "sim", "dropout").random(n) >= config.dropout_prob

    segment_len = config.segment_len or config.duration
    n_segments = int(np.ceil(config.duration / segment_len))
    multipliers = 1.0 + config.traffic_variation * (
        2.0 * substream(config.seed, "sim", "traffic").random(n_segments) - 1.0
    )
    load = multipliers[np.minimum((times // segment_len).astype(int), n_segments - 1)]

    # The workload mix drifts independently of the call rate: CPU cost and
    # outbound bytes per call wander, inbound bytes per call do not.
    drift = config.mix_variation, config.mix_correlation
    cpu_mix = 1.0 + _mix_drift(substream(config.seed, "sim", "cpu_mix"), n, *drift)
    out_mix = 1.0 + _mix_drift(substream(config.seed, "sim", "out_mix"), n, *drift)

    intensity = _intensity_at(times, config.noise_schedule)
    pressure = saturate(intensity)

    s = config.sensor_noise_std
    quiet_cpu = config.base_cpu * load * cpu_mix
    cpu = quiet_cpu + config.contention_gain * 100.0 * pressure
    cpu = cpu + s * quiet_cpu * substream(config.seed, "sim", "cpu").standard_normal(n)

    in_level = config.traffic_rate * config.bytes_per_call_in * load
    bw_in = in_level + s * in_level * substream(config.seed, "sim", "bw_in").standard_normal(n)

    out_level = config.traffic_rate * config.bytes_per_call_out * load * out_mix
    bw_out = out_level * (1.0 - 0.5 * pressure)
    bw_out = bw_out + s * out_level * substream(config.seed, "sim", "bw_out").standard_normal(n)

    if config.noise_shape is NoiseShape.MANY_SMALL_VMS:
        # Each small VM pins one core: the visible load moves up to the next VM-sized step.
        vm_count = config.noise_vm_count
        level = np.ceil(intensity * vm_count) / vm_count
    else:
        level = intensity
    noise_cpu = 100.0 * level * (1.0 + s * substream(config.seed, "sim", "noise_cpu").standard_normal(n))

    cpu = np.clip(cpu, 0.0, 100.0)
    noise_cpu = np.clip(noise_cpu, 0.0, 100.0)
    bw_in = np.maximum(bw_in, 0.0)
    bw_out = np.maximum(bw_out, 0.0)

    samples = [
        RawSample(float(t), float(c), float(i), float(o), float(z))
        for t, c, i, o, z in zip(times[kept], cpu[kept], bw_in[kept], bw_out[kept], noise_cpu[kept])
    ]
    truth = GroundTruth(
        config.noise_schedule,
        noise_cpu=tuple(float(z) for z in noise_cpu[kept]),
        sample_times=tuple(float(t) for t in times[kept]),
        scheduled_cpu=tuple(float(v) for v in 100.0 * level[kept]),
    )
    logger.debug("generated %d of %d nominal samples (seed %d)", len(samples), n, config.seed)
    return samples, truth


def _benchmark_schedule(
    rng: np.random.Generator,
    n_windows: int,
    window_len: float,
    positive_fraction: float,
    n_bursts: int,
) -> tuple[NoiseInterval, ...]:
    """Window-aligned noise bursts covering exactly ``positive_fraction`` of the windows."""
    noisy_total = int(round(positive_fraction * n_windows))
    quiet_total = n_windows - noisy_total

    def allocate(total: int, parts: int, low: float, high: float) -> np.ndarray:
        weights = rng.uniform(low, high, size=parts)
        raw = weights / weights.sum() * total
        counts = np.floor(raw).astype(int)
        remainder = total - counts.sum()
        counts[np.argsort(-(raw - counts), kind="stable")[:remainder]] += 1
        return counts

    bursts = allocate(noisy_total, n_bursts, 0.5, 1.5)
    gaps = allocate(quiet_total, n_bursts + 1, 0.5, 1.5)
    intensities = np.round(rng.uniform(0.6, 1.0, size=n_bursts), 2)

    schedule = []
    cursor = int(gaps[0])
    for burst, gap, intensity in zip(bursts, gaps[1:], intensities):
        start = cursor * window_len
        schedule.append(NoiseInterval(start, start + int(burst) * window_len, float(intensity)))
        cursor += int(burst) + int(gap)
    return tuple(schedule)


def standard_benchmark_scenario() -> ScenarioConfig:
    """The frozen benchmark scenario (version :data:`BENCHMARK_VERSION`, seed 42).

    About 9000 thirty-second windows, a third of them noisy, over ~100
    traffic segments. Noise bursts are aligned to window boundaries. The
    workload-mix drift keeps the classes overlapping, so learned detectors
    land near 0.9 F1 rather than at the ceiling.
    """
    seed = 42
    n_windows = 9000
    window_len = 30.0
    schedule = _benchmark_schedule(
        substream(seed, "benchmark", "schedule"),
        n_windows=n_windows,
        window_len=window_len,
        positive_fraction=0.337,
        n_bursts=150,
    )
    return ScenarioConfig(
        duration=n_windows * window_len,
        sample_period=10.0,
        jitter_frac=0.2,
        dropout_prob=0.02,
        base_cpu=40.0,
        traffic_rate=50.0,
        noise_schedule=schedule,
        noise_shape=NoiseShape.ONE_LARGE_VM,
        contention_gain=0.25,
        sensor_noise_std=0.03,
        seed=seed,
        segment_len=90 * window_len,
        traffic_variation=0.5,
        mix_variation=0.08,
        mix_correlation=0.9,
    )


def _format_schedule(schedule: tuple[NoiseInterval, ...]) -> str:
    return ";".join(f"{iv.start!r}:{iv.end!r}:{iv.intensity!r}" for iv in schedule)


def _parse_schedule(text: str) -> tuple[NoiseInterval, ...]:
    intervals = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(f"noise_schedule entry must be start:end:intensity, got {chunk!r}")
        try:
            intervals.append(NoiseInterval(*(float(p) for p in parts)))
        except ValueError as e:
            raise ConfigError(f"noise_schedule entry is not numeric: {chunk!r}") from e
    return tuple(intervals)


def scenario_from_settings(settings: Settings) -> ScenarioConfig:
    """Build a ScenarioConfig from a key/value document.

    Raises:
        ConfigError: Unknown key or unparsable value.
    """
    known = {f.name: f for f in fields(ScenarioConfig)}
    unknown = sorted(set(settings.keys()) - set(known))
    if unknown:
        raise ConfigError(f"unknown scenario key(s): {', '.join(unknown)}")

    defaults = ScenarioConfig()
    values: dict[str, object] = {}
    for name in settings.keys():
        default = getattr(defaults, name)
        if name == "noise_schedule":
            values[name] = _parse_schedule(settings.get(name))
        elif name == "noise_shape":
            try:
                values[name] = NoiseShape(settings.get(name))
            except ValueError as e:
                raise ConfigError(f"noise_shape must be one of {[s.value for s in NoiseShape]}") from e
        elif name == "segment_len":
            raw = settings.get(name)
            values[name] = None if raw in ("", "none", "None") else settings.get_float(name)
        elif isinstance(default, int) and not isinstance(default, bool):
            values[name] = settings.get_int(name)
        else:
            values[name] = settings.get_float(name)
    config = ScenarioConfig(**values)
    config.validate()
    return config


def load_scenario(path: Path | str) -> ScenarioConfig:
    """Read a scenario config file."""
    return scenario_from_settings(Settings(Path(path)))


def dump_scenario(config: ScenarioConfig) -> str:
    """Render a scenario config as a key/value document."""
    settings = Settings(header=f"noisyneighbor scenario (benchmark format v{BENCHMARK_VERSION})")
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "noise_schedule":
            settings.set(f.name, _format_schedule(value))
        elif f.name == "noise_shape":
            settings.set(f.name, value.value)
        elif value is None:
            settings.set(f.name, "none")
        else:
            settings.set(f.name, repr(value))
    return settings.to_text()


def emit_truth_csv(truth: GroundTruth) -> str:
    """Render the noise schedule as ``start_s,end_s,intensity`` rows."""
    rows = ["start_s,end_s,intensity"]
    rows.extend(f"{iv.start!r},{iv.end!r},{iv.intensity!r}" for iv in truth.noise_schedule)
    return "\n".join(rows) + "\n"
