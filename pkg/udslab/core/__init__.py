"""Core infrastructure for uds-lab (Konfiguration, Logging, Dateien, Fehler)."""

from .config_manager import ConfigManager, ExperimentConfig
from .errors import ConfigError, DivergenceError, NumericalAbortError, TraceFileError, UdsLabError
from .logging_manager import get_logger, set_console_level, setup_logging
from .validators import ConfigValidator, ensure_unique

__all__ = [
    "ConfigError",
    "ConfigManager",
    "ConfigValidator",
    "DivergenceError",
    "ExperimentConfig",
    "NumericalAbortError",
    "TraceFileError",
    "UdsLabError",
    "ensure_unique",
    "get_logger",
    "set_console_level",
    "setup_logging",
]
