"""Active-set selection from raw bucket candidates.

Three strategies turn the L per-table candidate lists into the set of
neurons a layer will actually compute:

* vanilla: union whole buckets in random table order until the target count
  beta is reached (never truncating inside a bucket),
* topk: keep the beta ids most frequent across all tables,
* hard_threshold: keep every id appearing in at least ``min_freq`` tables.

All three are pure functions of their inputs (vanilla additionally takes
the caller's RNG), so they parallelize trivially across batch slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .tables import RawCandidates
from .validation import check_positive_int

STRATEGIES = ("vanilla", "topk", "hard_threshold")


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "vanilla"
    beta: int = 128
    min_freq: int = 1

    def validate(self, num_tables: int | None = None) -> "SamplerConfig":
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        check_positive_int(self.beta, "beta")
        check_positive_int(self.min_freq, "min_freq")
        if num_tables is not None and self.min_freq > num_tables:
            raise ValueError(f"min_freq {self.min_freq} exceeds table count {num_tables}")
        return self


@dataclass
class SampleReport:
    """Retrieved active set plus how it was found.

    ``freq`` is the id -> occurrence-count map in flat array form: entry i
    counts how often neuron i appeared across the probed buckets.
    """

    active_ids: np.ndarray
    tables_probed: int
    freq: np.ndarray


def vanilla_sample(raw: RawCandidates, cfg: SamplerConfig, rng) -> SampleReport:
    """Union buckets in a uniformly random table order until beta distinct ids.

    The result may exceed beta (whole buckets are taken) and may fall short
    when all L buckets together hold fewer distinct ids. Cost is linear in
    the ids actually touched.
    """
    seen = np.zeros(raw.width, dtype=bool)
    parts = []
    probed_lists = []
    distinct = 0
    probed = 0
    for t in rng.permutation(len(raw.per_table)):
        probed += 1
        ids = raw.per_table[t]
        if ids:
            arr = np.asarray(ids, dtype=np.int64)
            probed_lists.append(arr)
            fresh = arr[~seen[arr]]
            if fresh.size:
                seen[fresh] = True
                parts.append(fresh)
                distinct += fresh.size
        if distinct >= cfg.beta:
            break
    active = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    if probed_lists:
        freq = np.bincount(np.concatenate(probed_lists), minlength=raw.width)
    else:
        freq = np.zeros(raw.width, dtype=np.int64)
    return SampleReport(active, probed, freq)


def _count(raw: RawCandidates) -> np.ndarray:
    lists = [np.asarray(ids, dtype=np.int64) for ids in raw.per_table if ids]
    if not lists:
        return np.zeros(raw.width, dtype=np.int64)
    return np.bincount(np.concatenate(lists), minlength=raw.width)


def topk_sample(raw: RawCandidates, cfg: SamplerConfig) -> SampleReport:
    """The beta ids with the highest cross-table frequency.

    Ties are broken toward the smaller neuron id, which makes the selection
    a total, deterministic function of the candidates.
    """
    freq = _count(raw)
    cand = np.nonzero(freq)[0]
    order = np.lexsort((cand, -freq[cand]))
    return SampleReport(cand[order][: cfg.beta], len(raw.per_table), freq)


def hard_threshold_sample(raw: RawCandidates, cfg: SamplerConfig) -> SampleReport:
    """Every id appearing at least min_freq times; no sorting involved."""
    freq = _count(raw)
    return SampleReport(np.nonzero(freq >= cfg.min_freq)[0], len(raw.per_table), freq)


def sample(raw: RawCandidates, cfg: SamplerConfig, rng=None) -> SampleReport:
    if cfg.strategy == "vanilla":
        return vanilla_sample(raw, cfg, rng)
    if cfg.strategy == "topk":
        return topk_sample(raw, cfg)
    return hard_threshold_sample(raw, cfg)


def retrieval_probability(
    strategy: str,
    p: float,
    k: int,
    l: int,
    *,
    tau: int | None = None,
    min_freq: int | None = None,
) -> float:
    """Closed-form retrieval probability for a neuron whose single-hash
    collision probability with the query is p.

    vanilla requires ``tau`` (tables probed) and evaluates
    (p^K)^tau * (1 - p^K)^(L - tau), the probability of colliding in a fixed
    pattern of tau probed tables and nowhere else. hard_threshold requires
    ``min_freq`` and evaluates the binomial tail over the L tables. topk has
    no closed form.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"collision probability must lie in [0, 1], got {p}")
    check_positive_int(k, "k")
    check_positive_int(l, "l")
    pk = p**k
    if strategy == "vanilla":
        if tau is None or not 0 <= tau <= l:
            raise ValueError(f"vanilla needs 0 <= tau <= {l}, got {tau}")
        return pk**tau * (1.0 - pk) ** (l - tau)
    if strategy == "hard_threshold":
        if min_freq is None or not 0 <= min_freq <= l:
            raise ValueError(f"hard_threshold needs 0 <= min_freq <= {l}, got {min_freq}")
        return float(
            sum(comb(l, i) * pk**i * (1.0 - pk) ** (l - i) for i in range(min_freq, l + 1))
        )
    if strategy == "topk":
        raise ValueError("topk selection has no closed-form retrieval probability")
    raise ValueError(f"unknown sampling strategy {strategy!r}")
