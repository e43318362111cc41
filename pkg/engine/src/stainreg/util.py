# src/stainreg/util.py
import functools
import hashlib
import logging
import math
import time

import numpy as np

from stainreg.errors import ArgumentError

_log = logging.getLogger(__name__)


def round_half_away(values: np.ndarray | float) -> np.ndarray:
    """Rounds half away from zero; the single quantization rule used for intensities."""
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Maps real intensities in [0, 255] to uint8 with round-half-away and clipping."""
    return np.clip(round_half_away(values), 0, 255).astype(np.uint8)


def format_float(value: float) -> str:
    """Decimal rendering with 17 significant digits (exact float round trip)."""
    return f"{value:.17g}"


def format_setting(value) -> str:
    """Renders a setting value the way `key = value` files spell it."""
    match value:
        case bool():
            return "true" if value else "false"
        case float():
            return repr(value)
        case tuple() | list():
            return ", ".join(format_setting(v) for v in value)
        case _:
            return str(value)


def pair_seed(seed: int, pair_id: str) -> int:
    """Stable non-negative 63-bit seed for one pair, the same in every process and batch order."""
    digest = hashlib.sha256(f"{seed}:{pair_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# --- Validation Helpers ---


def require(condition: bool, message: str) -> None:
    """Raises ArgumentError with `message` unless `condition` holds."""
    if not condition:
        _log.debug("Argument check failed: %s", message)
        raise ArgumentError(message)


def require_finite(value: float, name: str) -> float:
    require(math.isfinite(value), f"{name} must be finite, got {value!r}")
    return value


def timed(stage: str):
    """
    Decorator recording the wall-clock seconds of a pipeline stage.

    The wrapped function must take a `timings: dict[str, float]` keyword
    argument; the elapsed time is stored under `stage`.
    """

    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, timings: dict[str, float], **kwargs):
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                timings[stage] = time.perf_counter() - start
                _log.debug("Stage '%s' took %.3f s", stage, timings[stage])

        return wrapper

    return decorator
