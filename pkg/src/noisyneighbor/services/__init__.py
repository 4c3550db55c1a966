"""Services package for orchestration used by the command line."""
