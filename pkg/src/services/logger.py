import logging
import sys
from typing import Optional
from datetime import datetime

from src.config import Config

_HANDLER_TAG = "_magcap_handler"


def setup_logging(level: Optional[str] = None, quiet: bool = False) -> None:
    """
    Configure application-wide logging with console and optional file handlers.

    Console output goes to stderr so that --json output on stdout stays clean.
    Calling it again replaces the handlers it installed earlier.

    Args:
        level: Log level name, defaults to Config.LOG_LEVEL
        quiet: Restrict console output to warnings and errors
    """
    log_level = getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO)
    console_level = max(log_level, logging.WARNING) if quiet else log_level

    log_format = logging.Formatter(
        fmt='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root_logger.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(console_level)
    console_handler.setFormatter(log_format)
    setattr(console_handler, _HANDLER_TAG, True)
    root_logger.addHandler(console_handler)

    if Config.LOG_TO_FILE:
        Config.LOGS_DIR.mkdir(exist_ok=True)
        log_file = Config.LOGS_DIR / f"magcap_{datetime.now().strftime('%Y%m%d')}.log"
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(log_level)
        file_handler.setFormatter(log_format)
        setattr(file_handler, _HANDLER_TAG, True)
        root_logger.addHandler(file_handler)

    root_logger.setLevel(log_level)

    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for the given module name.

    Args:
        name: Module name (typically __name__)

    Returns:
        Configured logger instance

    Example:
        >>> logger = get_logger(__name__)
        >>> logger.info("Solver initialized")
    """
    return logging.getLogger(name)
