"""Small input-validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np


def as_samples(X, d: int = None) -> np.ndarray:
    """Coerce to a finite float64 ``(N, d)`` array; 1-D input becomes a column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"samples must be a 2-D array, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    if not np.all(np.isfinite(X)):
        raise ValueError("samples must be finite")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"samples have dimension {X.shape[1]}, expected {d}")
    return X


def as_bounds(bounds, d: int):
    """Normalize per-axis (lo, hi) pairs; a single pair broadcasts to all axes."""
    if bounds is None:
        return ((0.0, 1.0),) * d
    bounds = tuple(bounds)
    if len(bounds) == 2 and np.isscalar(bounds[0]):
        bounds = (bounds,) * d
    if len(bounds) != d:
        raise ValueError(f"need {d} per-axis bounds, got {len(bounds)}")
    return tuple((float(lo), float(hi)) for lo, hi in bounds)


def broadcast_axis_param(value, d: int, name: str):
    """Expand a scalar per-axis parameter to a length-``d`` tuple."""
    if np.isscalar(value) or isinstance(value, str):
        return (value,) * d
    value = tuple(value)
    if len(value) != d:
        raise ValueError(f"{name} needs one entry per axis ({d}), got {len(value)}")
    return value
