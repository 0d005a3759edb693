from .config_manager import ConfigManager
from .logger import get_logger, setup_logging

# Models import ConfigManager through this package, so service modules that
# import models are imported directly (src.services.<name>) rather than here.

__all__ = [
    "ConfigManager",
    "get_logger",
    "setup_logging",
]
