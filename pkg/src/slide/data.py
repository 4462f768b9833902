"""Extreme-classification corpora: text format parsing, batching, metrics.

File format: a header line ``N d L`` (examples, feature dim, label dim)
followed by one line per example of the form

    l1,l2,...  i1:v1 i2:v2 ...

The label list may be empty and feature tails may be missing entirely.
UTF-8 with LF or CRLF line endings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseVector
from .validation import check_positive_int


class DatasetFormatError(ValueError):
    """Malformed corpus file; message carries the offending line number."""


@dataclass
class Dataset:
    examples: list  # (features: SparseVector, labels: frozenset[int]) pairs
    num_features: int
    num_labels: int

    def __len__(self):
        return len(self.examples)

    def validate(self) -> "Dataset":
        if not self.examples:
            raise ValueError("dataset must contain at least one example")
        for x, labels in self.examples:
            x.validate()
            if x.dim != self.num_features:
                raise ValueError("feature dim mismatch")
            if labels and (min(labels) < 0 or max(labels) >= self.num_labels):
                raise ValueError("label out of range")
        return self


def _fail(line_no: int, message: str):
    raise DatasetFormatError(f"line {line_no}: {message}")


def load_xc_file(path) -> Dataset:
    """Parse a corpus file, reporting malformed content with line numbers."""
    with open(path, "r", encoding="utf-8", newline=None) as fh:
        header = fh.readline()
        if not header.strip():
            _fail(1, "missing header 'N d L'")
        parts = header.split()
        if len(parts) != 3:
            _fail(1, f"header must be 'N d L', got {header.strip()!r}")
        try:
            n, dim, n_labels = (int(p) for p in parts)
        except ValueError:
            _fail(1, f"non-integer header field in {header.strip()!r}")
        if n < 1 or dim < 1 or n_labels < 1:
            _fail(1, "header counts must be positive")
        examples = []
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if len(examples) == n and not line.strip():
                continue  # tolerate trailing blank lines
            if len(examples) == n:
                _fail(line_no, f"more than the declared {n} examples")
            label_part, _, feat_part = line.partition(" ")
            labels = set()
            if label_part:
                if ":" in label_part:
                    _fail(line_no, "feature token found where labels belong")
                for tok in label_part.split(","):
                    try:
                        label = int(tok)
                    except ValueError:
                        _fail(line_no, f"non-integer label {tok!r}")
                    if not 0 <= label < n_labels:
                        _fail(line_no, f"label {label} outside [0, {n_labels})")
                    labels.add(label)
            pairs = []
            for tok in feat_part.split():
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    _fail(line_no, f"feature token {tok!r} is not 'index:value'")
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    _fail(line_no, f"non-numeric feature token {tok!r}")
                if not np.isfinite(val):
                    _fail(line_no, f"non-finite feature value {tok!r}")
                if not 0 <= idx < dim:
                    _fail(line_no, f"feature index {idx} outside [0, {dim})")
                if val != 0.0:  # zero entries are dropped on parse
                    pairs.append((idx, val))
            examples.append((SparseVector.from_pairs(pairs, dim), frozenset(labels)))
        if len(examples) != n:
            _fail(line_no if examples else 1, f"expected {n} examples, found {len(examples)}")
    return Dataset(examples, dim, n_labels)


def save_xc_file(ds: Dataset, path) -> None:
    """Inverse of load_xc_file; reloading yields an equal dataset."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(ds.examples)} {ds.num_features} {ds.num_labels}\n")
        for x, labels in ds.examples:
            label_s = ",".join(str(l) for l in sorted(labels))
            feat_s = " ".join(f"{i}:{v!r}" for i, v in zip(x.indices.tolist(), x.values.tolist()))
            fh.write(f"{label_s} {feat_s}".rstrip() + "\n" if feat_s else f"{label_s}\n")


def batches(ds: Dataset, batch_size: int, seed):
    """Seeded epoch shuffle, partitioned into batches (last may be short)."""
    check_positive_int(batch_size, "batch_size")
    order = np.random.default_rng(seed).permutation(len(ds.examples))
    for lo in range(0, len(order), batch_size):
        yield [ds.examples[i] for i in order[lo : lo + batch_size]]


def precision_at_k(ranked, truth, k: int) -> float:
    """|top-k of the ranked list that are true| / k; empty ranking scores 0."""
    check_positive_int(k, "k")
    ranked = list(ranked[:k])
    if not ranked:
        return 0.0
    truth = set(truth)
    return sum(1 for r in ranked if r in truth) / k


def l2_normalize(ds: Dataset) -> Dataset:
    return Dataset(
        [(x.l2_normalized(), labels) for x, labels in ds.examples],
        ds.num_features,
        ds.num_labels,
    )


def synthetic_multilabel(
    n_examples: int,
    dim: int,
    n_labels: int,
    *,
    n_clusters: int = 50,
    nnz: int = 32,
    offset_scale: float = 0.6,
    noise: float = 0.35,
    extra_label_p: float = 0.3,
    nearest_labels: int = 0,
    hub_fraction: float = 0.0,
    hub_bonus: float = 0.0,
    zipf_a: float = 0.0,
    center_overlap: float = 0.0,
    seed: int = 0,
    example_seed=None,
) -> Dataset:
    """Clustered multi-label corpus for experiments and tests.

    Every label owns a prototype = shared cluster center + private offset;
    an example is a noisy point around its primary label's prototype,
    sparsified to its top-|value| entries. ``offset_scale`` sets how
    separable same-cluster labels are, ``noise`` how spread examples are.

    Label sets: by default the primary label, plus one random cluster
    sibling with probability ``extra_label_p``. With ``nearest_labels`` = m
    > 0 the labels are instead the m highest-affinity prototypes for the
    example (affinity = standardized prototype dot product), which makes
    membership a learnable function of the features and the sets as heavy
    as real extreme-classification corpora. ``hub_fraction`` of the labels
    then get ``hub_bonus`` (in affinity z-units) added, creating popular
    labels that sit near the membership boundary of many examples.

    ``zipf_a`` > 0 skews how often each label is drawn as an example's
    primary (real corpora are heavily imbalanced) and ``center_overlap``
    mixes a shared direction into every cluster center, so frequent labels
    acquire globally relevant weight vectors that training must suppress
    off-region.

    ``seed`` fixes label prototypes and hubs; ``example_seed`` (default:
    derived from seed) draws the examples, so train/test splits over one
    label space use the same seed with two example seeds.
    """
    proto_rng = np.random.default_rng(seed)
    rng = np.random.default_rng((seed, 1) if example_seed is None else (seed, 2, example_seed))
    centers = proto_rng.standard_normal((n_clusters, dim))
    if center_overlap:
        shared = proto_rng.standard_normal(dim)
        centers = (1.0 - center_overlap) * centers + center_overlap * shared
    prototypes = centers[np.arange(n_labels) % n_clusters] + offset_scale * proto_rng.standard_normal(
        (n_labels, dim)
    )
    bonus = np.zeros(n_labels)
    if hub_fraction and hub_bonus:
        hubs = proto_rng.choice(n_labels, size=max(1, int(hub_fraction * n_labels)), replace=False)
        bonus[hubs] = hub_bonus
    cluster_of = np.arange(n_labels) % n_clusters
    members = {c: np.nonzero(cluster_of == c)[0] for c in range(n_clusters)}

    if zipf_a:
        pop = 1.0 / np.arange(1, n_labels + 1) ** zipf_a
        pop = proto_rng.permutation(pop / pop.sum())
        primary = rng.choice(n_labels, size=n_examples, p=pop)
    else:
        primary = rng.integers(0, n_labels, size=n_examples)
    dense = prototypes[primary] + noise * rng.standard_normal((n_examples, dim))
    examples = []
    if nearest_labels:
        affinity = dense @ prototypes.T
        affinity = (affinity - affinity.mean(axis=1, keepdims=True)) / affinity.std(
            axis=1, keepdims=True
        )
        affinity += bonus
        top = np.argpartition(-affinity, nearest_labels - 1, axis=1)[:, :nearest_labels]
    for i in range(n_examples):
        row = dense[i]
        keep = np.sort(np.argsort(-np.abs(row))[:nnz])
        vals = row[keep]
        ok = vals != 0.0
        if nearest_labels:
            labels = frozenset(int(l) for l in top[i])
        else:
            chosen = {int(primary[i])}
            sibs = members[cluster_of[primary[i]]]
            if extra_label_p and rng.random() < extra_label_p and sibs.size > 1:
                chosen.add(int(rng.choice(sibs)))
            labels = frozenset(chosen)
        examples.append((SparseVector(keep[ok], vals[ok], dim), labels))
    return Dataset(examples, dim, n_labels)
