"""Pipeline defaults."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from noisyneighbor.core.settings import Settings, env_overrides

# Best SVM penalty reported for the original testbed.
DEFAULT_C = 3.8**2


@dataclass
class AppConfig:
    """Defaults shared by the CLI and the services."""

    window_len: float = 30.0
    noise_threshold: float = 5.0
    k_folds: int = 10
    svm_c: float = DEFAULT_C
    svm_gamma: float | None = None
    kkt_tol: float = 1e-3
    n_trees: int = 300
    min_leaf: int = 1
    svm_expansion: str = "quadratic"
    expand_first: bool = False
    stratified: bool = False
    seed: int = 0
    n_jobs: int = 1
    output_dir: Path = Path("data")

    def __post_init__(self):
        """Ensure paths are Path objects."""
        if isinstance(self.output_dir, str):
            self.output_dir = Path(self.output_dir)


class Config:
    """Configuration manager: defaults overlaid with ``NN_*`` overrides."""

    def __init__(self, env_file: Path | None = None):
        """Initialize configuration with defaults and apply overrides."""
        self._config = AppConfig()
        self.apply(env_overrides(env_file=env_file))

    def apply(self, overrides: Settings) -> None:
        """Apply key/value overrides onto the current config."""
        for field in fields(self._config):
            if field.name not in overrides:
                continue
            current = getattr(self._config, field.name)
            if isinstance(current, bool):
                value = overrides.get_bool(field.name)
            elif isinstance(current, int):
                value = overrides.get_int(field.name)
            elif isinstance(current, float) or field.name == "svm_gamma":
                value = overrides.get_float(field.name)
            elif isinstance(current, Path):
                value = Path(overrides.get(field.name))
            else:
                value = overrides.get(field.name)
            setattr(self._config, field.name, value)

    @property
    def config(self) -> AppConfig:
        """Get current configuration."""
        return self._config
