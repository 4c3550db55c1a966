"""Allow ``python -m noisyneighbor``."""

from noisyneighbor.cli import main

if __name__ == "__main__":
    main()
