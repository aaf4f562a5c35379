# utilities/helpers.py
# Common utility functions used across the application

import math
import re
from datetime import datetime, timezone
from itertools import product
from typing import Any, List, Optional, Sequence

import numpy as np


def max_abs(values: Any) -> float:
    """Max-norm of an array-like, 0.0 for empty input"""
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        return 0.0
    return float(np.max(np.abs(array)))


def tensor_grid(axes: Sequence[np.ndarray]) -> np.ndarray:
    """Cartesian product of 1-D axes as an (m, n) array, first axis slowest"""
    return np.array(list(product(*[np.asarray(a, dtype=float) for a in axes])), dtype=float)


def uniform_axes(lower: np.ndarray, upper: np.ndarray, points_per_axis: int) -> List[np.ndarray]:
    """Evenly spaced samples per axis, both ends included"""
    if points_per_axis < 1:
        raise ValueError(f"points_per_axis must be positive, got {points_per_axis}")
    if points_per_axis == 1:
        return [np.array([0.5 * (lo + hi)]) for lo, hi in zip(lower, upper)]
    return [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(lower, upper)]


def finite_or_none(value: Optional[float], label: str, notes: List[str]) -> Optional[float]:
    """Return a finite float, or None plus a note explaining why"""
    if value is None:
        return None
    value = float(value)
    if math.isfinite(value):
        return value
    notes.append(f"{label} is not finite ({value}); written as null")
    return None


def to_jsonable(obj: Any, label: str, notes: List[str]) -> Any:
    """Recursively convert numpy containers to JSON-ready Python values"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, f"{label}.{k}", notes) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, f"{label}[{i}]", notes) for i, v in enumerate(obj)]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist(), label, notes)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return finite_or_none(float(obj), label, notes)
    if hasattr(obj, 'value') and isinstance(getattr(obj, 'value'), str):
        return obj.value
    return obj


def sanitize_name(name: str) -> str:
    """Sanitize a metric name for use in filenames"""
    return re.sub(r'[^\w\s-]', '', name).strip().replace(' ', '_')


def format_timestamp(dt: Optional[datetime] = None) -> str:
    """ISO-8601 UTC timestamp"""
    dt = dt or datetime.now(timezone.utc)
    return dt.isoformat(timespec='seconds')


def format_duration(seconds: float) -> str:
    """Format a run time in a readable way"""
    if seconds < 1:
        return f"{seconds * 1000:.0f} ms"
    if seconds < 60:
        return f"{seconds:.1f} s"
    minutes, rest = divmod(seconds, 60)
    return f"{int(minutes)} min {rest:.0f} s"


def format_point(point: Optional[np.ndarray], digits: int = 4) -> str:
    if point is None:
        return "-"
    return "(" + ", ".join(f"{x:.{digits}f}" for x in np.asarray(point, dtype=float)) + ")"


def parse_float_list(text: str) -> List[float]:
    """Parse '0.1, -0.2' style lists used by command-line seeds and points"""
    parts = [p for p in re.split(r'[,\s]+', text.strip()) if p]
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise ValueError(f"cannot parse number list '{text}': {e}") from e


def symmetric_from_upper(values: Sequence[float], n: int) -> np.ndarray:
    """Rebuild a symmetric matrix from its row-major upper triangle"""
    if len(values) == n * n:
        matrix = np.asarray(values, dtype=float).reshape(n, n)
        return 0.5 * (matrix + matrix.T)
    expected = n * (n + 1) // 2
    if len(values) != expected:
        raise ValueError(f"expected {expected} upper-triangle entries (or {n * n} full), got {len(values)}")
    matrix = np.zeros((n, n))
    matrix[np.triu_indices(n)] = values
    return matrix + np.triu(matrix, 1).T
