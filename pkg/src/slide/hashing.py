"""LSH code generation.

Four hash families map vectors to integer bucket keys, one key per table.
Every key concatenates K sub-codes, and a scheme uses L tables:

* signed sparse random projection ("simhash") for cosine similarity,
* winner-take-all over permutation bins ("wta") for dense rank similarity,
* its densified variant ("dwta") that visits only the nonzeros,
* densified one-permutation minwise hashing ("doph") over top-k supports.

Families are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .sparse import SparseVector
from .validation import as_matrix, check_dim, check_fraction, check_positive_int

_M64 = (1 << 64) - 1

#: One int64 bucket key per table, length L.
HashCodes = np.ndarray


def _mix(a: int, b: int, c: int) -> int:
    """Deterministic 64-bit mix of three integers (splitmix-style)."""
    x = (a * 0x9E3779B97F4A7C15 + b * 0xBF58476D1CE4E5B9 + c * 0x94D049BB133111EB) & _M64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _M64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def pack_subcodes(codes: np.ndarray, bits: int) -> np.ndarray:
    """Concatenate rows of K sub-codes (each < 2**bits) into one int64 key per row.

    Injective for fixed (K, bits): distinct code tuples give distinct keys.
    """
    codes = np.asarray(codes, dtype=np.int64)
    shifts = (np.arange(codes.shape[-1], dtype=np.int64) * bits).astype(np.int64)
    return (codes << shifts).sum(axis=-1, dtype=np.int64)


@dataclass(frozen=True)
class HashFamilyConfig:
    """Parameters shared by all families.

    family: one of "simhash", "wta", "dwta", "doph".
    k_per_table: sub-codes concatenated per bucket key.
    num_tables: number of independent tables (keys produced per input).
    dim: input dimensionality.
    simhash_sparsity: fraction of nonzero entries per random projection.
    wta_bin_size: elements per permutation bin for wta/dwta.
    doph_top_k: how many top values survive binarization for doph.
    seed: determines all random state.
    """

    family: str
    k_per_table: int
    num_tables: int
    dim: int
    simhash_sparsity: float = 1.0 / 3.0
    wta_bin_size: int = 8
    doph_top_k: int = 32
    seed: int = 0

    def validate(self) -> "HashFamilyConfig":
        if self.family not in ("simhash", "wta", "dwta", "doph"):
            raise ValueError(f"unknown hash family {self.family!r}")
        check_positive_int(self.k_per_table, "k_per_table")
        check_positive_int(self.num_tables, "num_tables")
        check_positive_int(self.dim, "dim")
        if self.family == "simhash":
            check_fraction(self.simhash_sparsity, "simhash_sparsity")
        if self.family in ("wta", "dwta"):
            check_positive_int(self.wta_bin_size, "wta_bin_size")
            if self.wta_bin_size > self.dim:
                raise ValueError(
                    f"wta_bin_size {self.wta_bin_size} exceeds dim {self.dim}"
                )
        if self.family == "doph":
            check_positive_int(self.doph_top_k, "doph_top_k")
        return self


class HashFamily:
    """Base: fixed random state from the seed, (K, L) key generation."""

    def __init__(self, config: HashFamilyConfig):
        self.config = config.validate()
        self.dim = config.dim
        self.k = config.k_per_table
        self.l = config.num_tables
        self.n_codes = self.k * self.l

    def _check_key_width(self, bits_per_code: int):
        # int64 keys must stay positive; reject concatenations past 63 bits.
        total = bits_per_code * self.k
        if total > 63:
            raise ValueError(
                f"key would need {total} bits ({self.k} sub-codes of "
                f"{bits_per_code} bits); must fit in 63"
            )

    def hash(self, v: SparseVector) -> HashCodes:
        raise NotImplementedError

    def hash_batch(self, weights) -> np.ndarray:
        """Keys for many dense vectors at once, shape (n, L)."""
        w = as_matrix(weights, self.dim)
        return np.stack([self.hash(SparseVector.from_dense(row)) for row in w])


class SimHashFamily(HashFamily):
    """Signed sparse random projections; key bit k is [projection_k . v > 0].

    Projection entries take values in {+1, 0, -1}. Each of the K*L
    projections stores exactly ``round(dim * sparsity)`` nonzero components,
    sampled without replacement, generated once at construction.
    """

    def __init__(self, config: HashFamilyConfig):
        super().__init__(config)
        self._check_key_width(1)
        rng = np.random.default_rng(config.seed)
        d = self.dim
        self.entries_per_proj = min(d, max(1, int(round(d * config.simhash_sparsity))))
        c = self.entries_per_proj
        idx = np.empty((self.n_codes, c), dtype=np.int64)
        for p in range(self.n_codes):
            idx[p] = np.sort(rng.choice(d, size=c, replace=False))
        self.proj_indices = idx
        self.proj_signs = rng.choice(np.array([-1.0, 1.0]), size=(self.n_codes, c))
        # Inverted index: for each dimension, which (projection, sign) entries
        # touch it. Used by the incremental dot-product update.
        flat_dims = idx.ravel()
        order = np.argsort(flat_dims, kind="stable")
        self._inv_dims = flat_dims[order]
        self._inv_proj = np.repeat(np.arange(self.n_codes), c)[order]
        self._inv_sign = self.proj_signs.ravel()[order]
        self._key_weights = (np.int64(1) << np.arange(self.k, dtype=np.int64))

    def dots(self, v: SparseVector) -> np.ndarray:
        """All K*L projection dot products for one vector."""
        check_dim(v, self.dim, "simhash")
        dense = v.to_dense()
        return (self.proj_signs * dense[self.proj_indices]).sum(axis=1)

    def dots_batch(self, w: np.ndarray, chunk: int = 32) -> np.ndarray:
        """(n, K*L) dot products; projections materialized in chunks."""
        w = as_matrix(w, self.dim)
        out = np.empty((w.shape[0], self.n_codes))
        for lo in range(0, self.n_codes, chunk):
            hi = min(lo + chunk, self.n_codes)
            dense = np.zeros((hi - lo, self.dim))
            rows = np.repeat(np.arange(hi - lo), self.entries_per_proj)
            dense[rows, self.proj_indices[lo:hi].ravel()] = self.proj_signs[lo:hi].ravel()
            out[:, lo:hi] = w @ dense.T
        return out

    def codes_from_dots(self, dots: np.ndarray) -> HashCodes:
        bits = (dots > 0).astype(np.int64)  # sign(0) contributes bit 0
        return bits.reshape(self.l, self.k) @ self._key_weights

    def hash(self, v: SparseVector) -> HashCodes:
        return self.codes_from_dots(self.dots(v))

    def hash_batch(self, weights) -> np.ndarray:
        dots = self.dots_batch(weights)
        bits = (dots > 0).astype(np.int64)
        return bits.reshape(-1, self.l, self.k) @ self._key_weights

    def delta_dots(self, dims: np.ndarray, deltas: np.ndarray) -> np.ndarray:
        """Per-projection dot-product change when dims move by deltas.

        Visits only the stored projection entries that intersect the changed
        dimensions, so cost scales with the change size, not with dim.
        """
        out = np.zeros(self.n_codes)
        lo = np.searchsorted(self._inv_dims, dims, side="left")
        hi = np.searchsorted(self._inv_dims, dims, side="right")
        for i in range(len(dims)):
            if hi[i] > lo[i]:
                sl = slice(lo[i], hi[i])
                np.add.at(out, self._inv_proj[sl], deltas[i] * self._inv_sign[sl])
        return out


class _PermutationBinFamily(HashFamily):
    """Shared machinery for wta/dwta: permutations split into size-m bins.

    ceil(K*L*m/dim) permutations are drawn; each contributes ceil(dim/m)
    bins (the last one possibly short), and the first K*L bins across
    permutations produce the sub-codes. A sub-code is a bin-local index,
    therefore < m, packed into ceil(log2(m)) bits.
    """

    def __init__(self, config: HashFamilyConfig):
        super().__init__(config)
        d, m = self.dim, config.wta_bin_size
        self.bin_size = m
        self.bins_per_perm = -(-d // m)
        self.n_perms = -(-(self.n_codes * m) // d)
        assert self.n_perms * self.bins_per_perm >= self.n_codes
        self.bits_per_code = max(1, math.ceil(math.log2(m))) if m > 1 else 1
        self._check_key_width(self.bits_per_code)
        rng = np.random.default_rng(config.seed)
        self.perms = np.stack([rng.permutation(d) for _ in range(self.n_perms)])
        self.inv_perms = np.argsort(self.perms, axis=1)
        self._densify_salt = _mix(config.seed & _M64, 0xD1F7, 0xA0B1)

    def _densify(self, codes: np.ndarray, occupied: np.ndarray) -> np.ndarray:
        """Fill empty bins by borrowing from hash-chained occupied bins."""
        if occupied.all():
            return codes
        for g in np.nonzero(~occupied)[0]:
            code = 0  # sentinel when the chain never lands on an occupied bin
            for attempt in range(1, 101):
                donor = _mix(self._densify_salt, int(g), attempt) % self.n_codes
                if occupied[donor]:
                    code = codes[donor]
                    break
            codes[g] = code
        return codes

    def _pack(self, codes: np.ndarray) -> HashCodes:
        return pack_subcodes(codes.reshape(self.l, self.k), self.bits_per_code)

    def _codes_from_entries(self, positions, values) -> HashCodes:
        """Winner per bin among visited (position, value) entries.

        positions has shape (n_perms, t): position of each visited dimension
        under each permutation. The winner of a bin is its max value; ties go
        to the smallest bin-local offset.
        """
        n_bins = self.n_codes
        bins = positions // self.bin_size
        offs = positions - bins * self.bin_size
        gbin = (np.arange(self.n_perms)[:, None] * self.bins_per_perm + bins).ravel()
        offs = offs.ravel()
        vals = np.broadcast_to(values, positions.shape).ravel()
        keep = gbin < n_bins
        gbin, offs, vals = gbin[keep], offs[keep], vals[keep]
        codes = np.zeros(n_bins, dtype=np.int64)
        occupied = np.zeros(n_bins, dtype=bool)
        if gbin.size:
            order = np.lexsort((offs, -vals, gbin))
            gsorted = gbin[order]
            first = np.unique(gsorted, return_index=True)[1]
            codes[gsorted[first]] = offs[order][first]
            occupied[gsorted[first]] = True
        return self._pack(self._densify(codes, occupied))


class WtaFamily(_PermutationBinFamily):
    """Winner-take-all over all dimensions (dense scan)."""

    def hash(self, v: SparseVector) -> HashCodes:
        check_dim(v, self.dim, "wta")
        dense = v.to_dense()
        padded = self.bins_per_perm * self.bin_size
        vals = np.full((self.n_perms, padded), -np.inf)
        vals[:, : self.dim] = dense[self.perms]
        # argmax returns the first maximum, i.e. the smallest bin-local index
        codes = vals.reshape(self.n_perms, self.bins_per_perm, self.bin_size).argmax(axis=2)
        codes = codes.reshape(-1)[: self.n_codes].astype(np.int64)
        return self._pack(codes)


class DwtaFamily(_PermutationBinFamily):
    """Densified winner-take-all: visits only the nonzeros of the input.

    Cost is O(nnz * n_perms). Bins that see no nonzero borrow their code
    from a deterministically hash-chained occupied bin.
    """

    def hash(self, v: SparseVector) -> HashCodes:
        check_dim(v, self.dim, "dwta")
        positions = self.inv_perms[:, v.indices]
        return self._codes_from_entries(positions, v.values)


class DophFamily(HashFamily):
    """Densified one-permutation minwise hashing over a binarized input.

    The top ``doph_top_k`` values (all nonzeros when fewer) form the binary
    support set; one permutation split into K*L bins yields min-position
    sub-codes, with empty bins densified like dwta.
    """

    def __init__(self, config: HashFamilyConfig):
        super().__init__(config)
        d = self.dim
        self.bin_size = -(-d // self.n_codes) if d >= self.n_codes else 1
        self.bits_per_code = max(1, math.ceil(math.log2(self.bin_size))) if self.bin_size > 1 else 1
        self._check_key_width(self.bits_per_code)
        rng = np.random.default_rng(config.seed)
        self.perm = rng.permutation(d)
        self.inv_perm = np.argsort(self.perm)
        self._densify_salt = _mix(config.seed & _M64, 0xD091, 0xA0B2)

    def binarize(self, v: SparseVector) -> np.ndarray:
        """Indices of the top-k stored values; ties keep the smaller index."""
        k = min(self.config.doph_top_k, v.nnz)
        if k == 0:
            return np.empty(0, dtype=np.int64)
        best = heapq.nlargest(k, zip(v.values, -v.indices))
        return np.array(sorted(-int(ni) for _, ni in best), dtype=np.int64)

    def hash(self, v: SparseVector) -> HashCodes:
        check_dim(v, self.dim, "doph")
        support = self.binarize(v)
        n_bins = self.n_codes
        codes = np.zeros(n_bins, dtype=np.int64)
        occupied = np.zeros(n_bins, dtype=bool)
        if support.size:
            pos = self.inv_perm[support]
            bins = pos // self.bin_size
            offs = pos - bins * self.bin_size
            order = np.lexsort((offs, bins))
            bsorted = bins[order]
            first = np.unique(bsorted, return_index=True)[1]
            codes[bsorted[first]] = offs[order][first]
            occupied[bsorted[first]] = True
        # same donor-chain densification as dwta
        if not occupied.all():
            for g in np.nonzero(~occupied)[0]:
                code = 0
                for attempt in range(1, 101):
                    donor = _mix(self._densify_salt, int(g), attempt) % n_bins
                    if occupied[donor]:
                        code = codes[donor]
                        break
                codes[g] = code
        return pack_subcodes(codes.reshape(self.l, self.k), self.bits_per_code)


_FAMILIES = {
    "simhash": SimHashFamily,
    "wta": WtaFamily,
    "dwta": DwtaFamily,
    "doph": DophFamily,
}


def new_hash_family(config: HashFamilyConfig) -> HashFamily:
    """Construct a family; equal configs produce identical codes forever."""
    config.validate()
    return _FAMILIES[config.family](config)


def _expect(family, cls, name):
    if not isinstance(family, cls):
        raise TypeError(f"{name} requires a {cls.__name__}, got {type(family).__name__}")
    return family


def simhash_codes(family: HashFamily, v: SparseVector) -> HashCodes:
    return _expect(family, SimHashFamily, "simhash_codes").hash(v)


def wta_codes(family: HashFamily, v: SparseVector) -> HashCodes:
    return _expect(family, WtaFamily, "wta_codes").hash(v)


def dwta_codes(family: HashFamily, v: SparseVector) -> HashCodes:
    return _expect(family, DwtaFamily, "dwta_codes").hash(v)


def doph_codes(family: HashFamily, v: SparseVector) -> HashCodes:
    return _expect(family, DophFamily, "doph_codes").hash(v)
