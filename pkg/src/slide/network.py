"""The network: layers of neurons, sparse forward/backward, batch training.

Active sets come from per-layer hash tables (or a uniform baseline, or all
neurons for dense layers). Only active neurons are computed; only weights
between an active neuron and a nonzero input are read or updated, so a
fraction s of active neurons on both sides of a layer touches a fraction
s^2 of its weights.

Each neuron keeps batch-sized activation, gradient and active-flag arrays,
one entry per slot, which makes the per-instance work of a batch disjoint.
Weight and Adam-moment writes are unsynchronized read-modify-write: when
several workers race, a lost update is tolerated rather than locked against.
Hash tables are only rebuilt between batches.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hashing import HashFamilyConfig, new_hash_family
from .samplers import SamplerConfig, sample
from .sparse import SparseVector
from .tables import LshTables, RebuildSchedule
from .validation import check_positive_int

CHECKPOINT_MAGIC = b"SLDE"
CHECKPOINT_VERSION = 1
_KIND_CODES = {"relu": 0, "softmax": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule hyperparameters."""

    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n0: int = 50
    decay: float = 0.0  # rebuild-period stretch factor (lambda)
    epochs: int = 1
    seed: int = 0

    def validate(self) -> "TrainConfig":
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.n0, "n0")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        return self


@dataclass(frozen=True)
class LshLayerConfig:
    """How one layer hashes and samples its neurons."""

    family: str = "simhash"
    k: int = 6
    l: int = 25
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    capacity: int = 128
    policy: str = "fifo"
    simhash_sparsity: float = 1.0 / 3.0
    wta_bin_size: int = 8
    doph_top_k: int = 32


class Layer:
    """Weights plus per-slot neuron state. Hidden layers are ReLU, the final
    layer is an active-set softmax."""

    def __init__(self, width, fan_in, kind, slots, rng):
        bound = 1.0 / np.sqrt(fan_in)
        self.width = width
        self.fan_in = fan_in
        self.kind = kind
        self.w = rng.uniform(-bound, bound, size=(width, fan_in))
        self.b = np.zeros(width)
        self.adam_m = np.zeros((width, fan_in))
        self.adam_v = np.zeros((width, fan_in))
        self.adam_mb = np.zeros(width)
        self.adam_vb = np.zeros(width)
        self.steps = np.zeros(width, dtype=np.int64)
        self.lsh: LshTables | None = None
        self.sampler_cfg: SamplerConfig | None = None
        self.static_sample: int | None = None
        self.active_flags = np.zeros((width, slots), dtype=bool)
        self.activations = np.zeros((width, slots))
        self.gradients = np.zeros((width, slots))

    def neuron(self, idx: int) -> "Neuron":
        return Neuron(self, idx)


class Neuron:
    """View of one neuron's state inside its layer's arrays."""

    __slots__ = ("layer", "idx")

    def __init__(self, layer: Layer, idx: int):
        if not 0 <= idx < layer.width:
            raise IndexError(f"neuron {idx} out of range for width {layer.width}")
        self.layer = layer
        self.idx = idx

    @property
    def weights(self) -> np.ndarray:
        return self.layer.w[self.idx]

    @property
    def bias(self) -> float:
        return float(self.layer.b[self.idx])

    @property
    def adam_m(self) -> np.ndarray:
        return self.layer.adam_m[self.idx]

    @property
    def adam_v(self) -> np.ndarray:
        return self.layer.adam_v[self.idx]

    @property
    def step_count(self) -> int:
        return int(self.layer.steps[self.idx])

    @property
    def active_flags(self) -> np.ndarray:
        return self.layer.active_flags[self.idx]

    @property
    def activations(self) -> np.ndarray:
        return self.layer.activations[self.idx]

    @property
    def gradients(self) -> np.ndarray:
        return self.layer.gradients[self.idx]


@dataclass
class ForwardTrace:
    """Per-layer active ids and inputs for one slot, plus the softmax output."""

    slot: int
    active: list
    inputs: list
    probs: np.ndarray

    def loss(self, labels) -> float:
        """Cross entropy against the uniform distribution over true labels."""
        ids = self.active[-1]
        pos = np.searchsorted(ids, np.fromiter(labels, dtype=np.int64))
        return float(-np.log(np.maximum(self.probs[pos], 1e-300)).mean())


@dataclass
class BatchStats:
    loss: float
    active_fraction: dict
    rebuilt: list


class SlideNetwork:
    """A stack of layers; LSH sampling is attached per layer (by default only
    the wide output layer carries tables)."""

    def __init__(
        self,
        input_dim: int,
        widths,
        cfg: TrainConfig,
        lsh_layers: dict | None = None,
        static_layers: dict | None = None,
    ):
        check_positive_int(input_dim, "input_dim")
        if not widths:
            raise ValueError("need at least one layer")
        cfg.validate()
        self.cfg = cfg
        self.input_dim = input_dim
        self.access_log: list | None = None
        rng = np.random.default_rng(cfg.seed)
        self.layers: list[Layer] = []
        fan_in = input_dim
        for i, width in enumerate(widths):
            kind = "softmax" if i == len(widths) - 1 else "relu"
            self.layers.append(Layer(width, fan_in, kind, cfg.batch_size, rng))
            fan_in = width
        for i, spec in (lsh_layers or {}).items():
            self._attach_lsh(i, spec)
        for i, count in (static_layers or {}).items():
            self.layers[i].static_sample = check_positive_int(count, "static_sample")

    def _attach_lsh(self, index: int, spec: LshLayerConfig):
        layer = self.layers[index]
        family = new_hash_family(
            HashFamilyConfig(
                family=spec.family,
                k_per_table=spec.k,
                num_tables=spec.l,
                dim=layer.fan_in,
                simhash_sparsity=spec.simhash_sparsity,
                wta_bin_size=spec.wta_bin_size,
                doph_top_k=spec.doph_top_k,
                seed=self.cfg.seed + 7919 * (index + 1),
            )
        )
        layer.lsh = LshTables(
            family,
            policy=spec.policy,
            capacity=spec.capacity,
            schedule=RebuildSchedule(self.cfg.n0, self.cfg.decay),
            seed=self.cfg.seed + 104729 * (index + 1),
        )
        layer.sampler_cfg = spec.sampler.validate(spec.l)
        layer.lsh.build(layer.w)

    # -- forward ------------------------------------------------------------

    def _select_active(self, layer: Layer, x, is_output, labels, rng):
        if layer.lsh is not None:
            report = sample(layer.lsh.query(x), layer.sampler_cfg, rng)
            ids = report.active_ids
            if ids.size == 0:
                want = min(layer.sampler_cfg.beta, layer.width)
                ids = rng.choice(layer.width, size=want, replace=False)
        elif layer.static_sample is not None:
            ids = rng.choice(layer.width, size=min(layer.static_sample, layer.width), replace=False)
        else:
            return np.arange(layer.width, dtype=np.int64)
        if is_output and labels:
            ids = np.union1d(ids, np.fromiter(labels, dtype=np.int64))
            return ids.astype(np.int64)
        return np.sort(np.asarray(ids, dtype=np.int64))

    def forward(self, x: SparseVector, slot: int, labels=None, rng=None, forced_active=None) -> ForwardTrace:
        """Run one input through the net, writing this slot's neuron state.

        During training the true labels are always added to the output
        layer's active set so their gradient is never silently dropped.
        ``forced_active`` pins the active id list of each layer (used by
        gradient checks against a frozen subnetwork).
        """
        if x.dim != self.input_dim:
            raise ValueError(f"input dim {x.dim} != network input dim {self.input_dim}")
        if not 0 <= slot < self.cfg.batch_size:
            raise ValueError(f"slot {slot} out of range for batch size {self.cfg.batch_size}")
        if rng is None:
            rng = np.random.default_rng(0)
        last = len(self.layers) - 1
        active, inputs, probs = [], [], None
        for li, layer in enumerate(self.layers):
            if forced_active is not None and forced_active[li] is not None:
                ids = np.sort(np.asarray(forced_active[li], dtype=np.int64))
            else:
                ids = self._select_active(layer, x, li == last, labels, rng)
            if x.nnz:
                if ids.size == layer.width:
                    z = layer.w[:, x.indices] @ x.values + layer.b
                else:
                    z = layer.w[np.ix_(ids, x.indices)] @ x.values + layer.b[ids]
                if self.access_log is not None:
                    self.access_log.append((li, ids, x.indices))
            else:
                z = layer.b[ids].copy()
            layer.active_flags[:, slot] = False
            layer.active_flags[ids, slot] = True
            layer.gradients[ids, slot] = 0.0
            active.append(ids)
            inputs.append(x)
            if layer.kind == "relu":
                a = np.maximum(z, 0.0)
                layer.activations[ids, slot] = a
                nz = a > 0
                x = SparseVector(ids[nz], a[nz], layer.width)
            else:
                z -= z.max() if z.size else 0.0
                e = np.exp(z)
                probs = e / e.sum()
                layer.activations[ids, slot] = probs
        return ForwardTrace(slot, active, inputs, probs)

    # -- backward -----------------------------------------------------------

    def backward(self, trace: ForwardTrace, labels, slot: int, update: bool = True, capture=None):
        """Propagate errors over the active subnetwork and apply Adam updates.

        Per layer (top down) the error is first pushed to the previous
        layer's active neurons through the current weights, then this
        layer's weight block is updated, so every stored partial derivative
        is taken at the pre-update parameters.
        """
        if slot != trace.slot:
            raise ValueError(f"trace belongs to slot {trace.slot}, not {slot}")
        if not len(labels):
            raise ValueError("backward needs at least one true label")
        cfg = self.cfg
        rows = trace.active[-1]
        label_arr = np.fromiter(labels, dtype=np.int64)
        pos = np.searchsorted(rows, label_arr)
        if np.any(pos >= rows.size) or np.any(rows[np.minimum(pos, rows.size - 1)] != label_arr):
            raise ValueError("a true label is missing from the output active set")
        delta = trace.probs.copy()
        delta[pos] -= 1.0 / label_arr.size
        self.layers[-1].gradients[rows, slot] = delta
        for li in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[li]
            x_in = trace.inputs[li]
            if not x_in.nnz:
                # nothing flowed in: update biases of the rows, stop descending
                # (every deeper partial derivative is exactly zero)
                if capture is not None:
                    capture.append((li, rows, None, None, delta.copy()))
                if update:
                    _adam_block(layer, rows, None, None, delta, cfg)
                break
            block = layer.w[np.ix_(rows, x_in.indices)]
            grad = np.outer(delta, x_in.values)
            if self.access_log is not None:
                self.access_log.append((li, rows, x_in.indices))
            if capture is not None:
                capture.append((li, rows, x_in.indices, grad.copy(), delta.copy()))
            if li > 0:
                # push partials to the previous layer's nonzero active neurons
                # before this layer's weights move; ReLU derivative is 1 there
                back = block.T @ delta
                self.layers[li - 1].gradients[x_in.indices, slot] = back
            if update:
                _adam_block(layer, rows, x_in.indices, grad, delta, cfg)
            if li > 0:
                rows, delta = x_in.indices, back

    # -- training -----------------------------------------------------------

    def train_batch(self, batch, iteration: int, workers: int = 1, executor=None) -> BatchStats:
        """Forward+backward each instance in its own slot, then rebuild tables
        if due. Instances run concurrently when workers > 1; weight updates
        land asynchronously (HOGWILD contract)."""
        if not batch:
            raise ValueError("batch is empty")
        if len(batch) > self.cfg.batch_size:
            raise ValueError(f"batch of {len(batch)} exceeds configured size {self.cfg.batch_size}")
        lsh_idx = [i for i, l in enumerate(self.layers) if l.lsh is not None]
        frac_acc = {i: 0.0 for i in lsh_idx}

        def run_slot(i):
            x, labels = batch[i]
            rng = np.random.default_rng((self.cfg.seed, iteration, i))
            trace = self.forward(x, i, labels, rng)
            loss = trace.loss(labels)
            self.backward(trace, labels, i)
            fracs = {li: trace.active[li].size / self.layers[li].width for li in lsh_idx}
            return loss, fracs

        if workers <= 1:
            results = [run_slot(i) for i in range(len(batch))]
        elif executor is not None:
            results = list(executor.map(run_slot, range(len(batch))))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_slot, range(len(batch))))

        rebuilt = []
        for li in lsh_idx:
            layer = self.layers[li]
            layer.lsh.mark_weights_changed()
            if layer.lsh.maybe_rebuild(iteration, layer.w):
                rebuilt.append(li)
        losses = [r[0] for r in results]
        for _, fr in results:
            for li, f in fr.items():
                frac_acc[li] += f
        fractions = {li: frac_acc[li] / len(batch) for li in lsh_idx}
        return BatchStats(float(np.mean(losses)), fractions, rebuilt)

    # -- inference ----------------------------------------------------------

    def predict(self, x: SparseVector, rng=None, sampled: bool = True) -> np.ndarray:
        """Ranked label ids, best first. Sampled mode retrieves the output
        active set from the hash tables; ``sampled=False`` scores every
        neuron (used by dense baselines and oracle comparisons)."""
        forced = [np.arange(l.width) for l in self.layers] if not sampled else None
        trace = self.forward(x, 0, labels=None, rng=rng, forced_active=forced)
        ids = trace.active[-1]
        order = np.argsort(-trace.probs, kind="stable")
        return ids[order]


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; training state is unusable."""


def train_network(net: SlideNetwork, dataset, *, workers: int = 1, on_batch=None) -> int:
    """Run the configured number of epochs over the dataset.

    Batches are reshuffled per epoch from the net's seed. ``on_batch`` is
    called as on_batch(iteration, stats) after every batch; raise from it to
    stop early. Returns the total number of iterations run.
    """
    from .data import batches  # local import keeps data optional for inference

    cfg = net.cfg
    check_positive_int(workers, "workers")
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    iteration = 0
    try:
        for epoch in range(cfg.epochs):
            for batch in batches(dataset, cfg.batch_size, seed=(cfg.seed, epoch)):
                iteration += 1
                stats = net.train_batch(batch, iteration, workers=workers, executor=executor)
                if not np.isfinite(stats.loss):
                    raise TrainingDivergedError(
                        f"non-finite loss {stats.loss} at iteration {iteration}"
                    )
                if on_batch is not None:
                    on_batch(iteration, stats)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return iteration


def _adam_block(layer: Layer, rows, cols, grad, bias_grad, cfg: TrainConfig):
    """Adam on the (rows x cols) weight block and the row biases.

    Moments are decayed and bias-corrected only on the touched coordinates,
    with one step counter per neuron; untouched coordinates keep their
    moments frozen. Races with concurrent callers are tolerated.
    """
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    t = layer.steps[rows] + 1
    layer.steps[rows] = t
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    if cols is not None and grad is not None and len(cols):
        ix = np.ix_(rows, cols)
        m = b1 * layer.adam_m[ix] + (1 - b1) * grad
        v = b2 * layer.adam_v[ix] + (1 - b2) * grad * grad
        layer.adam_m[ix] = m
        layer.adam_v[ix] = v
        layer.w[ix] -= lr * (m / bc1[:, None]) / (np.sqrt(v / bc2[:, None]) + eps)
    mb = b1 * layer.adam_mb[rows] + (1 - b1) * bias_grad
    vb = b2 * layer.adam_vb[rows] + (1 - b2) * bias_grad * bias_grad
    layer.adam_mb[rows] = mb
    layer.adam_vb[rows] = vb
    layer.b[rows] -= lr * (mb / bc1) / (np.sqrt(vb / bc2) + eps)


def apply_update(neuron: Neuron, grad, cfg: TrainConfig, input_ids=None, bias_grad: float = 0.0):
    """Adam-update one neuron from a gradient over (a subset of) its inputs.

    ``grad`` aligns with ``input_ids`` when given, else with the full weight
    vector. Only the referenced coordinates' moments move; the neuron's step
    counter advances regardless of the gradient's value.
    """
    layer = neuron.layer
    grad = np.asarray(grad, dtype=np.float64)
    if input_ids is None:
        cols = np.arange(layer.fan_in, dtype=np.int64)
    else:
        cols = np.asarray(input_ids, dtype=np.int64)
        if cols.size and (cols.min() < 0 or cols.max() >= layer.fan_in):
            raise IndexError(f"input ids out of range for fan-in {layer.fan_in}")
    if grad.shape != (cols.size,):
        raise ValueError(f"gradient shape {grad.shape} does not match {cols.size} inputs")
    rows = np.array([neuron.idx], dtype=np.int64)
    _adam_block(layer, rows, cols, grad[None, :], np.array([bias_grad]), cfg)


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(net: SlideNetwork, path, with_adam: bool = True):
    """Versioned little-endian binary dump of all layer parameters.

    Layout: magic "SLDE", u32 version, u32 layer count; then per layer
    u32 width, u32 fan_in, u8 activation kind (0 relu / 1 softmax),
    row-major float32 weights, float32 biases, u8 adam flag and, when set,
    float32 adam_m, adam_v, bias moments and u64 per-neuron step counts.
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(net.layers)))
        for layer in net.layers:
            fh.write(struct.pack("<IIB", layer.width, layer.fan_in, _KIND_CODES[layer.kind]))
            fh.write(layer.w.astype("<f4").tobytes())
            fh.write(layer.b.astype("<f4").tobytes())
            fh.write(struct.pack("<B", 1 if with_adam else 0))
            if with_adam:
                fh.write(layer.adam_m.astype("<f4").tobytes())
                fh.write(layer.adam_v.astype("<f4").tobytes())
                fh.write(layer.adam_mb.astype("<f4").tobytes())
                fh.write(layer.adam_vb.astype("<f4").tobytes())
                fh.write(layer.steps.astype("<u8").tobytes())


def load_checkpoint(path, cfg: TrainConfig | None = None) -> SlideNetwork:
    """Rebuild a network (without hash tables) from a checkpoint file."""

    def read(fh, n):
        buf = fh.read(n)
        if len(buf) != n:
            raise ValueError("truncated checkpoint")
        return buf

    cfg = cfg or TrainConfig(batch_size=1)
    with open(path, "rb") as fh:
        if read(fh, 4) != CHECKPOINT_MAGIC:
            raise ValueError("not a SLDE checkpoint")
        version, n_layers = struct.unpack("<II", read(fh, 8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        widths, payload = [], []
        input_dim = None
        for _ in range(n_layers):
            width, fan_in, kind = struct.unpack("<IIB", read(fh, 9))
            if input_dim is None:
                input_dim = fan_in
            w = np.frombuffer(read(fh, 4 * width * fan_in), dtype="<f4").reshape(width, fan_in)
            b = np.frombuffer(read(fh, 4 * width), dtype="<f4")
            (has_adam,) = struct.unpack("<B", read(fh, 1))
            adam = None
            if has_adam:
                m = np.frombuffer(read(fh, 4 * width * fan_in), dtype="<f4").reshape(width, fan_in)
                v = np.frombuffer(read(fh, 4 * width * fan_in), dtype="<f4").reshape(width, fan_in)
                mb = np.frombuffer(read(fh, 4 * width), dtype="<f4")
                vb = np.frombuffer(read(fh, 4 * width), dtype="<f4")
                steps = np.frombuffer(read(fh, 8 * width), dtype="<u8")
                adam = (m, v, mb, vb, steps)
            widths.append(width)
            payload.append((w, b, _KIND_NAMES[kind], adam))
    net = SlideNetwork(input_dim, widths, cfg)
    for layer, (w, b, kind, adam) in zip(net.layers, payload):
        layer.kind = kind
        layer.w = w.astype(np.float64)
        layer.b = b.astype(np.float64)
        if adam is not None:
            layer.adam_m = adam[0].astype(np.float64)
            layer.adam_v = adam[1].astype(np.float64)
            layer.adam_mb = adam[2].astype(np.float64)
            layer.adam_vb = adam[3].astype(np.float64)
            layer.steps = adam[4].astype(np.int64)
    return net
