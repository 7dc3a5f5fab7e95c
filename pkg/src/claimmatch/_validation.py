"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_vector(v, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float array, rejecting NaN/Inf."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN/Inf components")
    return arr


def check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )


def check_nonzero(v: np.ndarray, name: str = "vector") -> None:
    if not np.any(v):
        raise ValueError(f"{name} is a zero vector")


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float array, rejecting NaN/Inf."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN/Inf entries")
    return arr


def check_seed(seed) -> int:
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return int(seed)
