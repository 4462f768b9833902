"""Scikit-learn style classifier facade over the training engine.

SlideClassifier follows the familiar estimator protocol: hyperparameters
are plain constructor arguments echoed by get_params/set_params, fit sets
trailing-underscore attributes, and predict/score work on the same input
types as fit. No scikit-learn import is required, but the parameter
conventions make the class drop into sklearn tooling that relies on them.
"""

from __future__ import annotations

import inspect

import numpy as np

from .data import Dataset, l2_normalize, precision_at_k
from .network import LshLayerConfig, SlideNetwork, TrainConfig, train_network
from .samplers import SamplerConfig
from .sparse import SparseVector
from .validation import check_positive_int


def _as_examples(X, y, n_features=None):
    """Coerce (X, y) into a list of (SparseVector, labelset) pairs."""
    if isinstance(X, Dataset):
        return list(X.examples), X.num_features, X.num_labels
    if isinstance(X, np.ndarray):
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        vecs = [SparseVector.from_dense(row) for row in X]
    else:
        vecs = list(X)
        for v in vecs:
            if not isinstance(v, SparseVector):
                raise TypeError("X must be a Dataset, 2-d array, or sequence of SparseVector")
    dims = {v.dim for v in vecs}
    if len(dims) > 1:
        raise ValueError(f"inconsistent feature dims {sorted(dims)}")
    dim = n_features or (dims.pop() if dims else None)
    if y is None:
        return [(v, None) for v in vecs], dim, None
    if len(y) != len(vecs):
        raise ValueError(f"X has {len(vecs)} rows but y has {len(y)}")
    labelsets = [frozenset({int(t)}) if np.isscalar(t) else frozenset(int(l) for l in t) for t in y]
    if any(not ls for ls in labelsets):
        raise ValueError("every example needs at least one label")
    n_labels = max(max(ls) for ls in labelsets) + 1
    return list(zip(vecs, labelsets)), dim, n_labels


class SlideClassifier:
    """Multi-label classifier trained with hash-based adaptive neuron sampling.

    The output layer (and only it, by default) carries LSH tables; every
    forward pass retrieves a small active set of output neurons instead of
    scoring all of them. ``lsh=None`` disables sampling and trains a dense
    full-softmax model; ``static_sample`` replaces the adaptive retrieval
    with a uniform random subset of that size (a sampled-softmax baseline).

    Parameters mirror the engine: (k, l) index shape, beta target active
    count (default 5% of the label space), bucket capacity/policy, rebuild
    schedule (n0, decay), Adam settings, batch size, epochs, workers, seed.
    """

    def __init__(
        self,
        hidden_dims=(128,),
        lsh="simhash",
        k=6,
        l=25,
        beta=None,
        strategy="vanilla",
        min_freq=2,
        bucket_capacity=128,
        policy="fifo",
        simhash_sparsity=1.0 / 3.0,
        wta_bin_size=8,
        doph_top_k=32,
        static_sample=None,
        n0=50,
        decay=0.0,
        epochs=5,
        batch_size=128,
        learning_rate=1e-3,
        adam_beta1=0.9,
        adam_beta2=0.999,
        adam_eps=1e-8,
        workers=1,
        seed=0,
        normalize=False,
    ):
        self.hidden_dims = hidden_dims
        self.lsh = lsh
        self.k = k
        self.l = l
        self.beta = beta
        self.strategy = strategy
        self.min_freq = min_freq
        self.bucket_capacity = bucket_capacity
        self.policy = policy
        self.simhash_sparsity = simhash_sparsity
        self.wta_bin_size = wta_bin_size
        self.doph_top_k = doph_top_k
        self.static_sample = static_sample
        self.n0 = n0
        self.decay = decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.workers = workers
        self.seed = seed
        self.normalize = normalize

    # -- sklearn parameter protocol -----------------------------------------

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"invalid parameter {name!r} for SlideClassifier")
            setattr(self, name, value)
        return self

    # -- fitting -------------------------------------------------------------

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            n0=self.n0,
            decay=self.decay,
            epochs=self.epochs,
            seed=self.seed,
        )

    def _build_network(self, n_features, n_labels) -> SlideNetwork:
        widths = list(self.hidden_dims) + [n_labels]
        out = len(widths) - 1
        lsh_layers = {}
        static_layers = {}
        if self.lsh is not None and self.static_sample is None:
            beta = self.beta if self.beta is not None else max(1, round(0.05 * n_labels))
            sampler = SamplerConfig(strategy=self.strategy, beta=beta, min_freq=self.min_freq)
            lsh_layers[out] = LshLayerConfig(
                family=self.lsh,
                k=self.k,
                l=self.l,
                sampler=sampler,
                capacity=self.bucket_capacity,
                policy=self.policy,
                simhash_sparsity=self.simhash_sparsity,
                wta_bin_size=self.wta_bin_size,
                doph_top_k=self.doph_top_k,
            )
        elif self.static_sample is not None:
            static_layers[out] = check_positive_int(self.static_sample, "static_sample")
        return SlideNetwork(n_features, widths, self.train_config(), lsh_layers, static_layers)

    def fit(self, X, y=None, n_labels=None, on_batch=None):
        examples, n_features, inferred = _as_examples(X, y)
        if any(labels is None for _, labels in examples):
            raise ValueError("fit needs labels: pass y or a labeled Dataset")
        n_labels = n_labels or inferred
        ds = Dataset(examples, n_features, n_labels).validate()
        if self.normalize:
            ds = l2_normalize(ds)
        self.network_ = self._build_network(n_features, n_labels)
        self.n_features_in_ = n_features
        self.n_labels_ = n_labels
        self.n_iterations_ = train_network(
            self.network_, ds, workers=self.workers, on_batch=on_batch
        )
        return self

    # -- inference -----------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise RuntimeError("this SlideClassifier instance is not fitted yet")

    def _vectors(self, X):
        examples, dim, _ = _as_examples(X, None, n_features=getattr(self, "n_features_in_", None))
        vecs = [x for x, _ in examples]
        for v in vecs:
            if v.dim != self.n_features_in_:
                raise ValueError(f"expected {self.n_features_in_} features, got {v.dim}")
        return [v.l2_normalized() for v in vecs] if self.normalize else vecs

    def predict_ranked(self, X, topn=5, sampled=True):
        """Per-row ranked label lists (each up to topn long, best first)."""
        self._check_fitted()
        rng = np.random.default_rng(self.seed)
        return [self.network_.predict(v, rng=rng, sampled=sampled)[:topn] for v in self._vectors(X)]

    def predict(self, X):
        """Top-1 label per row; -1 when retrieval comes back empty."""
        ranked = self.predict_ranked(X, topn=1)
        return np.array([int(r[0]) if len(r) else -1 for r in ranked])

    def score(self, X, y=None, k=1):
        """Mean precision-at-k over the given examples."""
        self._check_fitted()
        examples, _, _ = _as_examples(X, y)
        if any(labels is None for _, labels in examples):
            raise ValueError("score needs labels")
        ranked = self.predict_ranked([x for x, _ in examples], topn=k)
        return float(
            np.mean([precision_at_k(r, labels, k) for r, (_, labels) in zip(ranked, examples)])
        )
