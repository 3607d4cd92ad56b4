from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Optional


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        val = int(raw)
    except ValueError:
        return default
    return val if val > 0 else default


def _env_log_level(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip().upper()
    if not raw:
        return default
    level = logging.getLevelName(raw)
    return level if isinstance(level, int) else default


def data_dir() -> Optional[Path]:
    # Unset means no run ledger; the CLI can still pass --ledger explicitly.
    raw = os.getenv("BSVM_DATA_DIR", "").strip()
    return Path(raw) if raw else None


def default_threads() -> int:
    return _env_int("BSVM_THREADS", 1)


def log_level() -> int:
    return _env_log_level("BSVM_LOG_LEVEL", logging.INFO)
