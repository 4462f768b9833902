"""Sparse index/value vectors.

SparseVector is the universal carrier in this package: dataset features,
layer inputs, layer activations and error signals all travel as sorted
(index, value) pairs over a fixed dimensionality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SparseVector:
    """A sparse vector: strictly increasing indices, nonzero values, fixed dim.

    Attributes:
        indices: int64 array of dimension indices, strictly increasing, all < dim.
        values: float64 array, same length as indices, no entry exactly zero.
        dim: total dimensionality.
    """

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @staticmethod
    def from_pairs(pairs, dim: int) -> "SparseVector":
        """Build from (index, value) pairs; sorts, merges nothing, drops zeros."""
        if not pairs:
            return SparseVector(np.empty(0, np.int64), np.empty(0, np.float64), dim)
        idx = np.asarray([p[0] for p in pairs], dtype=np.int64)
        val = np.asarray([p[1] for p in pairs], dtype=np.float64)
        order = np.argsort(idx, kind="stable")
        idx, val = idx[order], val[order]
        keep = val != 0.0
        return SparseVector(idx[keep], val[keep], dim)

    @staticmethod
    def from_dense(dense, dim: int | None = None) -> "SparseVector":
        dense = np.asarray(dense, dtype=np.float64)
        idx = np.nonzero(dense)[0].astype(np.int64)
        return SparseVector(idx, dense[idx], dim if dim is not None else dense.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[self.indices] = self.values
        return out

    def scaled(self, factor: float) -> "SparseVector":
        if factor == 0.0:
            return SparseVector(np.empty(0, np.int64), np.empty(0, np.float64), self.dim)
        return SparseVector(self.indices, self.values * factor, self.dim)

    def l2_normalized(self) -> "SparseVector":
        norm = float(np.sqrt(np.dot(self.values, self.values)))
        return self if norm == 0.0 else self.scaled(1.0 / norm)

    def validate(self) -> "SparseVector":
        """Check the invariants; raises ValueError with a specific message."""
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.nnz:
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValueError(f"indices must lie in [0, {self.dim})")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")
            if np.any(self.values == 0.0):
                raise ValueError("stored values must be nonzero")
        return self


def dot(a: SparseVector, b: SparseVector) -> float:
    """Sparse-sparse inner product via sorted index intersection."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ia = np.isin(a.indices, b.indices, assume_unique=True)
    ib = np.isin(b.indices, a.indices, assume_unique=True)
    return float(np.dot(a.values[ia], b.values[ib]))
