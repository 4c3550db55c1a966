"""Logging setup: colored, timestamped records on stderr."""

from __future__ import annotations

import logging
import sys

import colorlog

LOGGER_NAME = "noisyneighbor"

# Same palette as a message log: info green, warning yellow, error red.
LOG_COLORS = {
    "DEBUG": "cyan",
    "INFO": "green",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "bold_red",
}


def setup_logging(verbosity: int = 0) -> logging.Logger:
    """Configure the package logger.

    Args:
        verbosity: -1 quiet (warnings only), 0 info, 1 or more debug.

    Returns:
        The configured package logger.
    """
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG

    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(
        colorlog.ColoredFormatter(
            "%(asctime)s %(log_color)s%(levelname)-7s%(reset)s %(name)s: %(message)s",
            datefmt="%H:%M:%S",
            log_colors=LOG_COLORS,
        )
    )

    logger = logging.getLogger(LOGGER_NAME)
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False
    return logger
