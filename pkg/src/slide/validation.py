"""Small argument-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

from .sparse import SparseVector


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_fraction(value, name: str, *, closed_right: bool = True) -> float:
    value = float(value)
    hi_ok = value <= 1.0 if closed_right else value < 1.0
    if not (0.0 < value and hi_ok):
        bound = "(0, 1]" if closed_right else "(0, 1)"
        raise ValueError(f"{name} must lie in {bound}, got {value!r}")
    return value


def check_dim(v: SparseVector, dim: int, context: str) -> SparseVector:
    if v.dim != dim:
        raise ValueError(f"{context}: vector dim {v.dim} does not match expected {dim}")
    return v


def as_matrix(weights, dim: int) -> np.ndarray:
    """Coerce a list of weight vectors or a 2-d array to (n, dim) float64."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != dim:
        raise ValueError(f"expected weight matrix of shape (n, {dim}), got {w.shape}")
    return w
