#!/usr/bin/env python3
"""
Process-level simulator settings

Reads SIM_* environment variables (a .env file is loaded first when
python-dotenv is available). Explicit constructor arguments win over the
environment.
"""
import logging
import os
from pathlib import Path
from typing import Optional

from sim_errors import ConfigInvalid

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class SimulationConfig:
    """
    Simulator environment settings

    Args:
        log_level: Logging level name (SIM_LOG_LEVEL, default INFO)
        log_file: Optional log file (SIM_LOG_FILE)
        output_dir: Default report directory (SIM_OUTPUT_DIR, default ./sim_output)
        workers: Parallel simulation instances (SIM_WORKERS, default 1)
        default_seed: Seed used when none is given (SIM_DEFAULT_SEED, default 42)
    """

    def __init__(self, log_level: Optional[str] = None, log_file: Optional[str] = None,
                 output_dir: Optional[str] = None, workers: Optional[int] = None,
                 default_seed: Optional[int] = None):
        self._load_env()

        self._log_level = (log_level or os.getenv("SIM_LOG_LEVEL") or "INFO").upper()
        self._log_file = log_file or os.getenv("SIM_LOG_FILE") or None
        self._output_dir = Path(output_dir or os.getenv("SIM_OUTPUT_DIR") or "./sim_output")
        self._workers = self._int_setting("SIM_WORKERS", workers, 1)
        self._default_seed = self._int_setting("SIM_DEFAULT_SEED", default_seed, 42)

    def _load_env(self):
        try:
            from dotenv import load_dotenv
            load_dotenv()
            logger.debug(".env file loaded")
        except ImportError:
            logger.warning("python-dotenv is not installed; using the process environment only")
        except Exception as e:
            logger.warning(f"Error loading .env file: {str(e)}")

    @staticmethod
    def _int_setting(env_key: str, explicit: Optional[int], default: int) -> int:
        if explicit is not None:
            return explicit
        raw = os.getenv(env_key)
        if raw is None or raw == "":
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigInvalid(f"{env_key} must be an integer (got '{raw}')")

    @property
    def log_level(self) -> str:
        return self._log_level

    @property
    def log_file(self) -> Optional[str]:
        return self._log_file

    @property
    def output_dir(self) -> Path:
        return self._output_dir

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def default_seed(self) -> int:
        return self._default_seed

    def validate_or_raise(self) -> None:
        """
        Raises:
            ConfigInvalid: Unknown log level, non-positive worker count or negative seed
        """
        if self._log_level not in LOG_LEVELS:
            raise ConfigInvalid(f"SIM_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)} (got '{self._log_level}')")
        if self._workers < 1:
            raise ConfigInvalid(f"SIM_WORKERS must be >= 1 (got {self._workers})")
        if self._default_seed < 0:
            raise ConfigInvalid(f"SIM_DEFAULT_SEED must be >= 0 (got {self._default_seed})")

    def log_status(self) -> None:
        logger.info(f"Simulator settings: level={self._log_level}, workers={self._workers}, "
                    f"seed={self._default_seed}, output={self._output_dir}")
        if self._log_file:
            logger.info(f"   - Log file: {self._log_file}")

    def __repr__(self) -> str:
        return (
            f"SimulationConfig(log_level={self._log_level!r}, log_file={self._log_file!r}, "
            f"output_dir={str(self._output_dir)!r}, workers={self._workers}, "
            f"default_seed={self._default_seed})"
        )
