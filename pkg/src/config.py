import os
import math
from pathlib import Path
from dotenv import load_dotenv
import logging

load_dotenv()


class Config:
    """
    Centralized configuration management for magcap.

    Deployment-level values are loaded from environment variables with sensible
    defaults. Algorithm hyperparameters live in ConfigManager instead, because
    they are resolved per scenario and embedded in every result bundle.

    Environment Variables:
        MAGCAP_OUTPUT_DIR: default output directory for plan/sweep when -o is omitted
        MAGCAP_WORKERS: default worker processes for Monte Carlo studies
        LOG_LEVEL: root log level (DEBUG/INFO/WARNING/ERROR)
        LOG_TO_FILE: also write a daily log file under LOGS_DIR
        ENVIRONMENT: deployment environment (development/testing/production)

    Usage:
        >>> Config.OUTPUT_DIR
        PosixPath('out')
        >>> Config.is_production()
        False
    """

    OUTPUT_DIR: Path = Path(os.getenv("MAGCAP_OUTPUT_DIR", "out"))
    WORKERS: int = int(os.getenv("MAGCAP_WORKERS", "1"))

    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_TO_FILE: bool = os.getenv("LOG_TO_FILE", "false").lower() == "true"

    BASE_DIR: Path = Path(__file__).resolve().parent.parent
    LOGS_DIR: Path = BASE_DIR / "logs"

    TOOL_NAME: str = "magcap"
    TOOL_VERSION: str = "1.0.0"
    TOOL_DESCRIPTION: str = "Constrained iLQR planning and closed-loop control for magnetic capsule manipulation"

    CSV_SCHEMA_VERSION: int = 1
    GAINS_SCHEMA_VERSION: int = 1

    # vacuum permeability, SI
    MU0: float = 4.0 * math.pi * 1e-7

    @classmethod
    def validate(cls) -> None:
        """
        Validate configuration values and create runtime directories.

        Raises:
            ValueError: If a value is invalid in production
        """
        try:
            if cls.WORKERS < 1:
                raise ValueError("MAGCAP_WORKERS must be >= 1")

            if cls.LOG_TO_FILE:
                cls.LOGS_DIR.mkdir(exist_ok=True)

        except Exception as e:
            logger = logging.getLogger(__name__)
            logger.warning(f"Config validation warning: {e}")
            if cls.ENVIRONMENT.lower() == "production":
                raise

    @classmethod
    def is_production(cls) -> bool:
        """Check if running in production environment."""
        return cls.ENVIRONMENT.lower() == "production"
