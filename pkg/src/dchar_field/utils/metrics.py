"""Wall-time and memory accounting for numerical steps."""

import time
from collections.abc import Callable
from functools import wraps
from typing import ParamSpec, TypeVar

import psutil
from loguru import logger

from dchar_field.utils.errors import ValidationError

P = ParamSpec("P")
R = TypeVar("R")

_MB = 1024.0 * 1024.0


def step_label(name: str) -> str:
    """``run_covariance_check`` -> ``covariance-check``."""
    return name.removeprefix("run_").replace("_", "-")


def resident_mb() -> float:
    """Resident set size of this process in MB."""
    return psutil.Process().memory_info().rss / _MB


def monitor_step(func: Callable[P, R]) -> Callable[P, R]:
    """Logs duration, RAM delta and the number of files written by a step.

    Rejected input is logged as a warning; anything else that escapes is an
    error. The exception is re-raised unchanged in both cases.
    """
    label = step_label(func.__name__)

    @wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        before = resident_mb()
        start = time.perf_counter()
        logger.info(f"🚀 {label} | RAM {before:.1f} MB")
        try:
            result = func(*args, **kwargs)
        except ValidationError as exc:
            logger.warning(f"🛑 {label} rejected its input: {exc}")
            raise
        except Exception as exc:
            elapsed = time.perf_counter() - start
            logger.error(f"❌ {label} failed after {elapsed:.2f}s ({type(exc).__name__}): {exc}")
            raise
        elapsed = time.perf_counter() - start
        files = getattr(result, "files", None)
        written = f" | {len(files)} file(s)" if isinstance(files, list) else ""
        logger.info(
            f"✅ {label} in {elapsed:.2f}s | RAM Δ {resident_mb() - before:+.1f} MB{written}"
        )
        return result

    return wrapper
