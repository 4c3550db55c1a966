"""Core functionality modules."""

from .config import AppConfig, Config
from .detector import Detector, DetectorSpec, fit_detector
from .file_utils import FileUtils
from .telemetry import Dataset, Instance, RawSample, Window

__all__ = [
    "AppConfig",
    "Config",
    "Dataset",
    "Detector",
    "DetectorSpec",
    "FileUtils",
    "Instance",
    "RawSample",
    "Window",
    "fit_detector",
]
