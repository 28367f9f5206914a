"""Small argument checks used across modules."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .exceptions import DegenerateGeometryError, InputError


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise InputError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise InputError(f"{name} must be >= 1, got {value}")
    return int(value)


def check_unit_interval(value, name: str, *, open_low: bool = False) -> float:
    value = float(value)
    low_ok = value > 0.0 if open_low else value >= 0.0
    if not (low_ok and value <= 1.0):
        raise InputError(f"{name} must lie in {'(' if open_low else '['}0, 1], got {value}")
    return value


def check_ring(vertices, name: str = "ring", min_vertices: int = 3) -> np.ndarray:
    """Return ``vertices`` as a finite ``(n, 2)`` float array."""
    arr = np.asarray(vertices, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"{name} must be a sequence of (x, y) pairs")
    if arr.shape[0] < min_vertices:
        raise DegenerateGeometryError(
            f"{name} needs at least {min_vertices} vertices, got {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite coordinates")
    return arr


def is_finite_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def as_pairs(points: Sequence) -> list[tuple[float, float]]:
    return [(float(x), float(y)) for x, y in points]
