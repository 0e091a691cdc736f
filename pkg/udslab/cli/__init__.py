"""Command line entry points for uds-lab."""

from .runner import main, parse_args

__all__ = ["main", "parse_args"]
