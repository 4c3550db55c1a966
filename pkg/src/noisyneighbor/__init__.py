"""noisyneighbor - detect noisy neighbors from coarse VM telemetry."""

__version__ = "0.1.0"
