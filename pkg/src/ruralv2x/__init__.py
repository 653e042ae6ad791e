"""Rural 5G NR sidelink connected-braking simulator with closed-form oracles."""
from .config import ConfigError, ScenarioConfig, expand_sweep, load_config
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["ConfigError", "ScenarioConfig", "expand_sweep", "load_config", "BACKEND", "__version__"]
