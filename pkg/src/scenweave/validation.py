"""Input validation helpers shared by the estimator facades and the core."""
from __future__ import annotations

from numbers import Integral, Real
from typing import Optional

import numpy as np


def check_array_2d(X, name: str = "X", n_cols: Optional[int] = None,
                   min_rows: int = 1, dtype=float) -> np.ndarray:
    """Coerce to a finite 2-D ndarray, or raise ValueError naming the input."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    if arr.shape[0] < min_rows:
        raise ValueError(f"{name} must have at least {min_rows} rows, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(value, name: str, strict: bool = True) -> float:
    if not isinstance(value, Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    v = float(value)
    if not np.isfinite(v):
        raise ValueError(f"{name} must be finite, got {v}")
    if strict and v <= 0:
        raise ValueError(f"{name} must be > 0, got {v}")
    if not strict and v < 0:
        raise ValueError(f"{name} must be >= 0, got {v}")
    return v


def check_int_in_range(value, name: str, low: Optional[int] = None,
                       high: Optional[int] = None) -> int:
    if not isinstance(value, Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    v = int(value)
    if low is not None and v < low:
        raise ValueError(f"{name} must be >= {low}, got {v}")
    if high is not None and v > high:
        raise ValueError(f"{name} must be <= {high}, got {v}")
    return v


def check_unit_interval(value, name: str, open_left: bool = False) -> float:
    v = check_positive(value, name, strict=open_left)
    if v > 1:
        raise ValueError(f"{name} must be <= 1, got {v}")
    return v


def check_choice(value, name: str, choices) -> str:
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_trajectory_array(points, name: str = "points", min_frames: int = 2) -> np.ndarray:
    """Validate a (T, 2) coordinate array."""
    arr = check_array_2d(points, name=name, n_cols=2, min_rows=min_frames)
    return arr


def check_random_state(seed) -> np.random.Generator:
    """Accept None, an int seed, or a Generator; return a Generator."""
    if seed is None:
        return np.random.default_rng()
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, Integral) and not isinstance(seed, bool):
        return np.random.default_rng(int(seed))
    raise TypeError(f"seed must be None, an int, or a numpy Generator, got {type(seed).__name__}")
