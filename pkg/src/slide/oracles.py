"""Slow, obviously-correct baselines for tests and acceptance runs.

Everything here trades speed for transparency: dense matrix math, full
softmax, exhaustive scoring. Size guards refuse anything beyond toy scale
so none of these can sneak into a benchmark path.
"""

from __future__ import annotations

import numpy as np

from .hashing import HashFamilyConfig, new_hash_family
from .network import SlideNetwork, TrainConfig
from .sparse import SparseVector

TOY_WEIGHT_LIMIT = 10_000
TOY_ELEMENT_LIMIT = 4_000_000


def _guard_net(net: SlideNetwork):
    total = sum(l.w.size for l in net.layers)
    if total > TOY_WEIGHT_LIMIT:
        raise ValueError(f"dense oracle limited to {TOY_WEIGHT_LIMIT} weights, got {total}")


def dense_forward_backward(net: SlideNetwork, x: SparseVector, labels):
    """Full-softmax forward pass and dense backprop gradients.

    Returns (probs over every output neuron, [(dW, db) per layer]). Reads
    the network's weights without touching any of its state.
    """
    _guard_net(net)
    acts = [x.to_dense()]
    zs = []
    for layer in net.layers:
        z = layer.w @ acts[-1] + layer.b
        zs.append(z)
        if layer.kind == "relu":
            acts.append(np.maximum(z, 0.0))
        else:
            z = z - z.max()
            e = np.exp(z)
            acts.append(e / e.sum())
    probs = acts[-1]
    target = np.zeros_like(probs)
    labels = list(labels)
    target[labels] = 1.0 / len(labels)
    delta = probs - target
    grads = [None] * len(net.layers)
    for li in range(len(net.layers) - 1, -1, -1):
        grads[li] = (np.outer(delta, acts[li]), delta.copy())
        if li > 0:
            delta = (net.layers[li].w.T @ delta) * (zs[li - 1] > 0)
    return probs, grads


class DenseReferenceTrainer:
    """Per-instance sequential trainer with dense matrices and masked Adam.

    Independent twin of the sparse engine: it materializes full activation
    vectors and gradient matrices, then restricts the Adam moment updates to
    columns whose input was nonzero (the engine's touch rule). Given the
    same seed and a single worker, its loss trajectory must match the engine
    with sampling disabled.
    """

    def __init__(self, input_dim, widths, cfg: TrainConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.w, self.b = [], []
        self.m, self.v, self.mb, self.vb, self.steps = [], [], [], [], []
        fan_in = input_dim
        for width in widths:
            bound = 1.0 / np.sqrt(fan_in)
            self.w.append(rng.uniform(-bound, bound, size=(width, fan_in)))
            self.b.append(np.zeros(width))
            self.m.append(np.zeros((width, fan_in)))
            self.v.append(np.zeros((width, fan_in)))
            self.mb.append(np.zeros(width))
            self.vb.append(np.zeros(width))
            self.steps.append(np.zeros(width, dtype=np.int64))
            fan_in = width
        if sum(m.size for m in self.w) > TOY_WEIGHT_LIMIT:
            raise ValueError("reference trainer limited to toy scale")

    def _forward(self, dense_x):
        acts = [dense_x]
        for i in range(len(self.w)):
            z = self.w[i] @ acts[-1] + self.b[i]
            if i < len(self.w) - 1:
                acts.append(np.maximum(z, 0.0))
            else:
                z = z - z.max()
                e = np.exp(z)
                acts.append(e / e.sum())
        return acts

    def _adam_masked(self, i, rows, cols, grad, bias_grad):
        # Touch rule mirrors the engine: only (rows x cols) moments move and
        # only rows advance their step counters.
        cfg = self.cfg
        if not rows.size:
            return
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        t = self.steps[i][rows] + 1
        self.steps[i][rows] = t
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        if cols.size:
            ix = np.ix_(rows, cols)
            g = grad[ix]
            self.m[i][ix] = b1 * self.m[i][ix] + (1 - b1) * g
            self.v[i][ix] = b2 * self.v[i][ix] + (1 - b2) * g * g
            self.w[i][ix] -= (
                cfg.learning_rate
                * (self.m[i][ix] / bc1[:, None])
                / (np.sqrt(self.v[i][ix] / bc2[:, None]) + cfg.adam_eps)
            )
        bg = bias_grad[rows]
        self.mb[i][rows] = b1 * self.mb[i][rows] + (1 - b1) * bg
        self.vb[i][rows] = b2 * self.vb[i][rows] + (1 - b2) * bg * bg
        self.b[i][rows] -= (
            cfg.learning_rate
            * (self.mb[i][rows] / bc1)
            / (np.sqrt(self.vb[i][rows] / bc2) + cfg.adam_eps)
        )

    def train_batch(self, batch) -> float:
        losses = []
        for x, labels in batch:
            acts = self._forward(x.to_dense())
            probs = acts[-1]
            labels = list(labels)
            losses.append(float(-np.log(np.maximum(probs[labels], 1e-300)).mean()))
            target = np.zeros_like(probs)
            target[labels] = 1.0 / len(labels)
            delta = probs - target
            for i in range(len(self.w) - 1, -1, -1):
                grad = np.outer(delta, acts[i])
                if i > 0:
                    next_delta = (self.w[i].T @ delta) * (acts[i] > 0)
                if i == len(self.w) - 1:
                    rows = np.arange(self.w[i].shape[0])
                else:
                    rows = np.nonzero(acts[i + 1])[0]
                self._adam_masked(i, rows, np.nonzero(acts[i])[0], grad, delta)
                if i > 0:
                    delta = next_delta
        return float(np.mean(losses))

    def predict_ranked(self, x: SparseVector) -> np.ndarray:
        probs = self._forward(x.to_dense())[-1]
        return np.argsort(-probs, kind="stable")


def exact_mips(query: SparseVector, neurons, k: int):
    """Exhaustive top-k inner products, ties broken toward the smaller id."""
    w = np.asarray(neurons, dtype=np.float64)
    if w.size > TOY_ELEMENT_LIMIT:
        raise ValueError("exact_mips limited to toy scale")
    if k > w.shape[0]:
        raise ValueError(f"k={k} exceeds {w.shape[0]} neurons")
    scores = w[:, query.indices] @ query.values if query.nnz else np.zeros(w.shape[0])
    return np.argsort(-scores, kind="stable")[:k]


def mc_collision(config: HashFamilyConfig, va: SparseVector, vb: SparseVector, trials: int) -> float:
    """Empirical collision rate over freshly seeded hash functions."""
    if trials < 1000:
        raise ValueError("use at least 1000 trials")
    hits = 0
    for t in range(trials):
        fam = new_hash_family(
            HashFamilyConfig(
                family=config.family,
                k_per_table=config.k_per_table,
                num_tables=config.num_tables,
                dim=config.dim,
                simhash_sparsity=config.simhash_sparsity,
                wta_bin_size=config.wta_bin_size,
                doph_top_k=config.doph_top_k,
                seed=config.seed + t,
            )
        )
        hits += int(np.array_equal(fam.hash(va), fam.hash(vb)))
    return hits / trials
