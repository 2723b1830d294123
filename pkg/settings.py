"""
Runtime settings read from the environment (and a local .env file).
"""

import logging
import os
from dataclasses import dataclass
from functools import lru_cache

from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()

DEFAULTS = {
    "GPCERT_JITTER_SCALE": "1e-10",
    "GPCERT_MAX_WORKERS": "4",
    "GPCERT_LOG_LEVEL": "INFO",
    "GPCERT_SCAN_POINTS": "100",
}


@dataclass(frozen=True)
class Settings:
    jitter_scale: float
    max_workers: int
    log_level: str
    scan_points: int


def _read(name: str) -> str:
    return os.environ.get(name, "").strip() or DEFAULTS[name]


def _read_float(name: str) -> float:
    raw = _read(name)
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}")
    if value < 0:
        raise ConfigError(f"{name} must be nonnegative, got {raw!r}")
    return value


def _read_int(name: str, minimum: int = 1) -> int:
    raw = _read(name)
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {raw!r}")
    return value


def load_settings() -> Settings:
    """Build a Settings object from the current environment."""
    level = _read("GPCERT_LOG_LEVEL").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"GPCERT_LOG_LEVEL is not a logging level: {level!r}")
    return Settings(
        jitter_scale=_read_float("GPCERT_JITTER_SCALE"),
        max_workers=_read_int("GPCERT_MAX_WORKERS"),
        log_level=level,
        scan_points=_read_int("GPCERT_SCAN_POINTS"),
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return load_settings()


def default_jitter(theta1: float) -> float:
    """Jitter used when the caller does not pass one explicitly."""
    return get_settings().jitter_scale * theta1
