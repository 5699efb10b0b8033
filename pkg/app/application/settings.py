from __future__ import annotations

import logging
import os
from typing import Any

from dotenv import dotenv_values

from app.application.consts import DATA_CACHE_DIR, L_MAX, T_MAX, TOLERANCE
from app.application.models import RunConfig

log = logging.getLogger(__name__)

config = {**dotenv_values(), **os.environ}


def cache_dir() -> str:
    return config.get("PRUDENT_CACHE_DIR") or DATA_CACHE_DIR


def _int_setting(name: str, default: int) -> int:
    raw = config.get(name)
    if raw in (None, ""):
        return default
    try:
        return int(raw)
    except ValueError:
        log.warning(f"Ignoring non-integer {name}={raw!r}, using {default}")
        return default


def get_run_config(command: str, **overrides: Any) -> RunConfig:
    """Resolve the configuration of one CLI invocation.

    Values given explicitly (not None) win over environment variables, which win
    over the package defaults.
    """
    run_config = RunConfig(
        command=command,
        workers=_int_setting("PRUDENT_WORKERS", 1),
        tolerance=TOLERANCE,
        t_max=series_horizon(),
        L_max=_int_setting("PRUDENT_L_MAX", L_MAX),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(run_config, key, value)
    return run_config


def series_horizon() -> int:
    """Largest excursion length of the K, K* and P* tables (PRUDENT_T_MAX)."""
    return _int_setting("PRUDENT_T_MAX", T_MAX)
