"""Per-layer (K, L) hash tables over neuron ids.

Each of the L tables maps a bucket key to a fixed-capacity bucket of neuron
ids. Overflow is handled by either FIFO eviction or Vitter reservoir
sampling. Tables are rebuilt on an exponentially stretching schedule; for
signed-projection hashing a per-neuron dot-product cache supports cheap
incremental re-hashing after sparse weight changes.

Queries are read-only and may run concurrently; rebuilds must be fenced by
the caller (the trainer rebuilds only at batch boundaries).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .hashing import HashCodes, HashFamily, SimHashFamily
from .sparse import SparseVector
from .validation import as_matrix, check_dim, check_positive_int


class Bucket:
    """Fixed-capacity slot array plus the attempt count since last rebuild."""

    __slots__ = ("slots", "head", "occupancy", "count")

    def __init__(self):
        self.slots = []
        self.head = 0  # FIFO ring position of the oldest entry once full
        self.occupancy = 0
        self.count = 0

    def ids(self) -> list:
        """Stored ids in insertion order (oldest first under FIFO)."""
        if self.head:
            return self.slots[self.head :] + self.slots[: self.head]
        return self.slots


@dataclass
class RebuildSchedule:
    """Rebuild number t happens at round(sum_{i<t} n0 * exp(lam * i))."""

    n0: int
    lam: float = 0.0
    t: int = field(default=0, init=False)
    next_at: int = field(init=False)
    _sum: float = field(init=False, repr=False)

    def __post_init__(self):
        check_positive_int(self.n0, "n0")
        if self.lam < 0:
            raise ValueError(f"decay constant must be >= 0, got {self.lam}")
        self._sum = float(self.n0)
        self.next_at = math.floor(self._sum + 0.5)

    def due(self, iteration: int) -> bool:
        return iteration >= self.next_at

    def advance(self):
        self.t += 1
        self._sum += self.n0 * math.exp(self.lam * self.t)
        self.next_at = math.floor(self._sum + 0.5)


@dataclass
class RawCandidates:
    """Per-table bucket contents for one query, before sampling."""

    per_table: list
    width: int


class LshTables:
    """L hash tables for one layer plus rebuild state and the simhash cache."""

    def __init__(
        self,
        family: HashFamily,
        *,
        policy: str = "fifo",
        capacity: int = 128,
        schedule: RebuildSchedule | None = None,
        seed: int = 0,
    ):
        if policy not in ("fifo", "reservoir"):
            raise ValueError(f"unknown insertion policy {policy!r}")
        check_positive_int(capacity, "capacity")
        self.family = family
        self.policy = policy
        self.capacity = capacity
        self.schedule = schedule or RebuildSchedule(50)
        self.tables = [dict() for _ in range(family.l)]
        self.n_items = 0
        self.cached_dots = None  # (n_items, K*L) running w . r values, simhash only
        self.cache_valid = False
        self._rng = random.Random(seed)

    # -- construction ------------------------------------------------------

    def build(self, weights) -> None:
        """Hash every neuron and insert its id into all L tables."""
        w = as_matrix(weights, self.family.dim)
        if isinstance(self.family, SimHashFamily):
            self.cached_dots = self.family.dots_batch(w)
            self.cache_valid = True
            codes = self._codes_from_cache()
        else:
            codes = self.family.hash_batch(w)
        self.n_items = w.shape[0]
        self._clear()
        self.insert_codes(codes)

    def _codes_from_cache(self) -> np.ndarray:
        fam = self.family
        bits = (self.cached_dots > 0).astype(np.int64)
        return bits.reshape(-1, fam.l, fam.k) @ (np.int64(1) << np.arange(fam.k, dtype=np.int64))

    def _clear(self):
        for tbl in self.tables:
            tbl.clear()

    def insert_codes(self, codes: np.ndarray) -> None:
        """Insert ids 0..n-1 given their precomputed (n, L) keys."""
        cap = self.capacity
        if self.policy == "fifo":
            for t in range(self.family.l):
                tbl = self.tables[t]
                for nid, key in enumerate(codes[:, t].tolist()):
                    b = tbl.get(key)
                    if b is None:
                        b = tbl[key] = Bucket()
                    b.count += 1
                    if b.occupancy < cap:
                        b.slots.append(nid)
                        b.occupancy += 1
                    else:
                        h = b.head
                        b.slots[h] = nid
                        h += 1
                        b.head = 0 if h == cap else h
        else:
            # reservoir (Vitter algorithm R, two-draw form): keep the new id
            # with probability capacity/count, landing on a uniform slot
            rand = self._rng.random
            for t in range(self.family.l):
                tbl = self.tables[t]
                for nid, key in enumerate(codes[:, t].tolist()):
                    b = tbl.get(key)
                    if b is None:
                        b = tbl[key] = Bucket()
                    n = b.count = b.count + 1
                    if b.occupancy < cap:
                        b.slots.append(nid)
                        b.occupancy += 1
                    elif rand() * n < cap:
                        b.slots[int(rand() * cap)] = nid

    # -- queries -------------------------------------------------------------

    def query(self, v: SparseVector) -> RawCandidates:
        """Bucket contents under the input's keys; exactly L probes, no scans."""
        check_dim(v, self.family.dim, "lsh query")
        codes = self.family.hash(v)
        return self.query_codes(codes)

    def query_codes(self, codes: HashCodes) -> RawCandidates:
        per_table = []
        for t, key in enumerate(codes.tolist()):
            b = self.tables[t].get(key)
            per_table.append(b.slots if b is not None else [])
        return RawCandidates(per_table, self.n_items)

    # -- maintenance -----------------------------------------------------------

    def maybe_rebuild(self, iteration: int, weights) -> bool:
        """Rebuild all tables when the schedule is due; returns whether it did.

        Re-hashing reuses the cached projection dot products when they are
        still valid (kept current through incremental updates); otherwise the
        codes are recomputed from the weights and the cache is refreshed.
        """
        if not self.schedule.due(iteration):
            return False
        if isinstance(self.family, SimHashFamily) and self.cache_valid and self.cached_dots is not None:
            codes = self._codes_from_cache()
            self._clear()
            self.insert_codes(codes)
        else:
            self.build(weights)
        self.schedule.advance()
        return True

    def mark_weights_changed(self):
        """Invalidate the dot-product cache after untracked weight updates."""
        self.cache_valid = False

    def incremental_simhash_update(self, neuron_id: int, changed) -> HashCodes:
        """Refresh one neuron's cached dot products after a sparse weight change.

        ``changed`` is a sequence of (dimension, delta) pairs. Only stored
        projection entries intersecting the changed dimensions are visited,
        and the returned codes equal a full re-hash of the updated weights.
        """
        if not isinstance(self.family, SimHashFamily):
            raise TypeError("incremental updates require a simhash family")
        if self.cached_dots is None or not (0 <= neuron_id < self.n_items):
            raise KeyError(f"no cached codes for neuron {neuron_id}; build() it first")
        if len(changed):
            dims = np.asarray([c[0] for c in changed], dtype=np.int64)
            deltas = np.asarray([c[1] for c in changed], dtype=np.float64)
            self.cached_dots[neuron_id] += self.family.delta_dots(dims, deltas)
        return self.family.codes_from_dots(self.cached_dots[neuron_id])

    # -- introspection ---------------------------------------------------------

    def occupancy_totals(self) -> list:
        return [sum(b.occupancy for b in tbl.values()) for tbl in self.tables]
