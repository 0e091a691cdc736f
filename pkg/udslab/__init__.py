"""uds-lab: score-distillation laboratory with exact Gaussian-mixture oracles."""

from .core.config_manager import ConfigManager, ExperimentConfig
from .core.errors import ConfigError, NumericalAbortError

__all__ = ["ConfigError", "ConfigManager", "ExperimentConfig", "NumericalAbortError", "__version__"]

__version__ = "0.1.0"
