"""
Configuration, run context and the shared error hierarchy.
"""

from src.utils.config import Config, load_config
from src.utils.context import RunContext, derive_seed, get_context, set_context
from src.utils.errors import ConfigError, ContractError, DimensionError, NumericError, SetupError, SlaterError

__all__ = [
    "Config",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "NumericError",
    "RunContext",
    "SetupError",
    "SlaterError",
    "derive_seed",
    "get_context",
    "load_config",
    "set_context",
]
