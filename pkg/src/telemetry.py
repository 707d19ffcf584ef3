# ============================================================================
#  File: telemetry.py
#  Purpose: Timing and resource telemetry for pipeline stages
# ============================================================================
# SECTION 1: Global Variables
# ============================================================================
#
import csv
import os
import threading
import time
from datetime import datetime
from functools import wraps
from pathlib import Path
from typing import Callable, Optional, ParamSpec, TypeVar

import psutil
from loguru import logger

from src.config import LOG_DIR, TELEMETRY_DIR_ENV

TELEMETRY_FILENAME = "telemetry.csv"
TELEMETRY_FIELDS = ("datetime", "component", "action", "elapsed_sec", "mem_mb", "cpu_pct", "status")

_telemetry_dir: Optional[Path] = None
_write_lock = threading.Lock()
#
# ============================================================================
# SECTION 2: Location
# ============================================================================
# Function 2.1: set_telemetry_dir
# Purpose: Redirect telemetry rows (tests point this at a tmp directory).
# ============================================================================
#
def set_telemetry_dir(path: Optional[Path]) -> None:
    global _telemetry_dir
    _telemetry_dir = Path(path) if path is not None else None


def telemetry_csv_path() -> Path:
    """Resolve the telemetry CSV, honouring MREIT_TELEMETRY_DIR."""
    base = _telemetry_dir or Path(os.environ.get(TELEMETRY_DIR_ENV, LOG_DIR))
    base.mkdir(parents=True, exist_ok=True)
    return base / TELEMETRY_FILENAME
#
# ============================================================================
# SECTION 3: Timing Decorator
# ============================================================================
# Function 3.1: record_telemetry
# Purpose: Decorator to record timing, memory, and CPU usage for a stage
#          action. Rows are written even when the wrapped call raises.
# ============================================================================
#
P = ParamSpec("P")
T = TypeVar("T")


def record_telemetry(component: str, action: str) -> Callable[[Callable[P, T]], Callable[P, T]]:

    def decorator(func: Callable[P, T]) -> Callable[P, T]:

        @wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
            start = time.perf_counter()
            process = psutil.Process(os.getpid())
            mem_before = process.memory_info().rss
            process.cpu_percent(interval=None)
            status = "error"
            try:
                result = func(*args, **kwargs)
                status = "ok"
                return result
            finally:
                elapsed = time.perf_counter() - start
                mem_after = process.memory_info().rss
                row = {
                    'datetime': datetime.now().isoformat(),
                    'component': component,
                    'action': action,
                    'elapsed_sec': round(elapsed, 3),
                    'mem_mb': round((mem_after - mem_before) / 1048576, 3),
                    'cpu_pct': process.cpu_percent(interval=None),
                    'status': status
                }
                _append_row(row)
                logger.debug("telemetry {}:{} {:.3f}s ({})", component, action, elapsed, status)

        return wrapper

    return decorator


def _append_row(row: dict) -> None:
    path = telemetry_csv_path()
    with _write_lock:
        with open(path, 'a', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=TELEMETRY_FIELDS)
            if f.tell() == 0:
                writer.writeheader()
            writer.writerow(row)
#
#
## End of Script
