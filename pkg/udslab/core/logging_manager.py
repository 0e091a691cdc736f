"""Central logging setup (zentrale Protokollierung) for uds-lab."""

from __future__ import annotations

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

LOG_DIR = Path("logs")
DEFAULT_LOG_FILE = LOG_DIR / "udslab.log"


def setup_logging(log_file: Path = DEFAULT_LOG_FILE, console_level: int = logging.INFO) -> logging.Logger:
    """Configure the package logger with console (stderr) and file output."""

    log_file.parent.mkdir(parents=True, exist_ok=True)
    logger = logging.getLogger("udslab")
    if logger.handlers:
        return logger

    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    formatter = logging.Formatter(
        fmt="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    file_handler = RotatingFileHandler(log_file, maxBytes=1_000_000, backupCount=3)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    # stderr keeps stdout free for --json payloads
    console_handler = logging.StreamHandler()
    console_handler.setLevel(console_level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    logger.debug("Logging initialised")
    return logger


def set_console_level(level: int) -> None:
    """Adjust the console threshold, e.g. to keep ``--json`` output quiet."""

    logger = setup_logging()
    for handler in logger.handlers:
        if not isinstance(handler, RotatingFileHandler):
            handler.setLevel(level)


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Return a configured logger; create configuration if needed."""

    root_logger = setup_logging()
    return root_logger if name is None else root_logger.getChild(name)


__all__ = ["get_logger", "set_console_level", "setup_logging", "DEFAULT_LOG_FILE"]
