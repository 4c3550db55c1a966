"""Flat key/value documents (``key=value`` lines, ``#`` comments)."""

from __future__ import annotations

import logging
import os
from pathlib import Path

from noisyneighbor.core.errors import ConfigError, ParseError

logger = logging.getLogger(__name__)

DEFAULT_ENV_FILE = Path(".env")


class Settings:
    """Reads and writes flat key/value documents.

    Used for scenario config files and for the optional ``.env`` file holding
    pipeline overrides.
    """

    def __init__(self, path: Path | str | None = None, header: str = ""):
        """Initialize settings.

        Args:
            path: Backing file; loaded immediately if it exists.
            header: Comment line rendered at the top by :meth:`to_text`.
        """
        self.path = Path(path) if path is not None else None
        self.header = header
        self._settings: dict[str, str] = {}
        if self.path is not None and self.path.exists():
            self.load()

    @classmethod
    def from_text(cls, text: str) -> "Settings":
        """Parse a key/value document held in memory."""
        settings = cls()
        settings._parse(text)
        return settings

    def load(self) -> None:
        """Load settings from the backing file.

        Raises:
            ParseError: If a non-comment line has no ``=``.
            OSError: If the file cannot be read.
        """
        if self.path is None:
            return
        self._parse(self.path.read_text(encoding="utf-8"))
        logger.debug("loaded %d keys from %s", len(self._settings), self.path)

    def _parse(self, text: str) -> None:
        for line_number, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", line_number)
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ParseError("empty key", line_number)
            self._settings[key] = value.strip().strip('"').strip("'")

    def to_text(self) -> str:
        """Render the document, keys sorted."""
        lines = [f"# {self.header}"] if self.header else []
        for key, value in sorted(self._settings.items()):
            if " " in value or '"' in value:
                value = f'"{value}"'
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def keys(self) -> list[str]:
        return list(self._settings)

    def __contains__(self, key: str) -> bool:
        return key in self._settings

    def get(self, key: str, default: str = "") -> str:
        """Get a setting value, falling back to ``default``."""
        return self._settings.get(key, default)

    def set(self, key: str, value: object) -> None:
        """Set a setting value (in memory; render with :meth:`to_text`)."""
        self._settings[key] = str(value)

    def get_int(self, key: str, default: int = 0) -> int:
        """Get a setting as integer.

        Raises:
            ConfigError: If the stored value is not an integer.
        """
        if key not in self._settings:
            return default
        try:
            return int(self._settings[key])
        except ValueError as e:
            raise ConfigError(f"{key}: expected an integer, got {self._settings[key]!r}") from e

    def get_float(self, key: str, default: float = 0.0) -> float:
        """Get a setting as float.

        Raises:
            ConfigError: If the stored value is not a number.
        """
        if key not in self._settings:
            return default
        try:
            return float(self._settings[key])
        except ValueError as e:
            raise ConfigError(f"{key}: expected a number, got {self._settings[key]!r}") from e

    def get_bool(self, key: str, default: bool = False) -> bool:
        """Get a setting as boolean."""
        value = self.get(key, str(default)).lower()
        return value in ("true", "1", "yes", "on")


def env_overrides(prefix: str = "NN_", env_file: Path | None = None) -> Settings:
    """Collect ``NN_*`` overrides from an optional ``.env`` file and the environment.

    Environment variables win over the file. The prefix is stripped and keys
    are lower-cased, so ``NN_N_JOBS=4`` becomes ``n_jobs``.
    """
    source = Settings(env_file if env_file is not None else DEFAULT_ENV_FILE)
    merged = Settings()
    for key in source.keys():
        if key.startswith(prefix):
            merged.set(key[len(prefix):].lower(), source.get(key))
    for key, value in os.environ.items():
        if key.startswith(prefix):
            merged.set(key[len(prefix):].lower(), value)
    return merged
