import time
from functools import wraps
from typing import Callable

from src.services.logger import get_logger

logger = get_logger(__name__)


def log_duration(operation: str, level: str = "info"):
    """
    Log how long the wrapped call took.

    Failures are logged with their elapsed time and re-raised unchanged.

    Args:
        operation: Name used in the log line
        level: Logger method used on success ("info" or "debug")

    Returns:
        Decorator function

    Example:
        >>> @log_duration("iLQR solve")
        >>> def solve(problem): ...
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                logger.warning(f"{operation} failed after {time.perf_counter() - start:.3f}s: {e}")
                raise
            getattr(logger, level)(f"{operation} finished in {time.perf_counter() - start:.3f}s")
            return result

        return wrapper
    return decorator
