"""Small shared helpers."""

import math


def iround(v: float) -> int:
    """Round half up, deterministically (no banker's rounding)."""
    return int(math.floor(v + 0.5))


def fmt_float(v: float) -> str:
    """Shortest decimal string that parses back to the exact same float."""
    return repr(float(v))
