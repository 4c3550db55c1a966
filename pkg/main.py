#!/usr/bin/env python3
"""Run the noisyneighbor command line from a checkout, without installing."""

import sys
from pathlib import Path

SRC = Path(__file__).resolve().parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from noisyneighbor.cli import main  # noqa: E402 - needs src/ on the path

if __name__ == "__main__":
    main()
