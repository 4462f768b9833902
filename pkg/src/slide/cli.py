"""Command-line driver: training runs, benchmark sweeps, CSV emission.

Subcommands:

    slide train           --config run.toml [--workers N] [--seed S] [--out DIR]
    slide bench-samplers  --config run.toml [--out DIR]
    slide bench-insertion --config run.toml [--out DIR]
    slide bench-scaling   --config run.toml [--workers N] [--out DIR]

The config file is TOML; command-line flags override it, and the
SLIDE_THREADS environment variable overrides both for the worker count.
Every CSV starts with a config-hash comment so a result file can be traced
back to the exact configuration that produced it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import Dataset, batches, load_xc_file, precision_at_k, synthetic_multilabel
from .estimator import SlideClassifier
from .hashing import HashFamilyConfig, new_hash_family
from .network import TrainingDivergedError, save_checkpoint
from .samplers import SamplerConfig, hard_threshold_sample, topk_sample, vanilla_sample
from .tables import LshTables, RawCandidates


@dataclass
class RunConfig:
    """Everything a run needs; field names match the TOML keys."""

    train: str = ""
    test: str = ""
    normalize: bool = False
    hidden: list = field(default_factory=lambda: [128])
    lsh: str = "simhash"  # "none" disables sampling
    k: int = 6
    l: int = 25
    beta: int = 0  # 0 -> default to 5% of the label space
    strategy: str = "vanilla"
    min_freq: int = 2
    bucket_capacity: int = 128
    policy: str = "fifo"
    simhash_sparsity: float = 1.0 / 3.0
    wta_bin_size: int = 8
    doph_top_k: int = 32
    static_sample: int = 0  # >0 -> uniform random baseline instead of LSH
    epochs: int = 1
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    n0: int = 50
    decay: float = 0.0
    seed: int = 0
    workers: int = 1
    eval_every: int = 50
    eval_subsample: int = 10_000
    out: str = "."
    # bench knobs
    bench_sizes: list = field(default_factory=lambda: [1_000, 10_000, 100_000])
    bench_tables: int = 50
    bench_neurons: int = 20_000
    bench_dim: int = 128
    bench_k: int = 6
    bench_capacity: int = 128
    scaling_workers: list = field(default_factory=lambda: [1, 2, 4, 8])
    scaling_iterations: int = 30
    scaling_dim: int = 2048
    scaling_hidden: int = 256
    scaling_labels: int = 2048
    scaling_examples: int = 4096
    scaling_beta: int = 128

    def validate_paths(self, need_train=True):
        if need_train:
            if not self.train:
                raise FileNotFoundError("config sets no train path")
            if not Path(self.train).exists():
                raise FileNotFoundError(f"train file not found: {self.train}")
        if self.test and not Path(self.test).exists():
            raise FileNotFoundError(f"test file not found: {self.test}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        return self


_SECTIONS = ("data", "model", "train", "bench")


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    known = set(RunConfig().__dict__)
    flat = {}
    for section, body in doc.items():
        if section not in _SECTIONS or not isinstance(body, dict):
            raise ValueError(f"unexpected config section {section!r}")
        for key, value in body.items():
            if key not in known:
                raise ValueError(f"unknown config key {section}.{key}")
            flat[key] = value
    return replace(RunConfig(), **flat)


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _write_csv(path, cfg, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config-hash: {config_hash(cfg)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return path


def _classifier(cfg: RunConfig) -> SlideClassifier:
    return SlideClassifier(
        hidden_dims=tuple(cfg.hidden),
        lsh=None if cfg.lsh == "none" else cfg.lsh,
        k=cfg.k,
        l=cfg.l,
        beta=cfg.beta or None,
        strategy=cfg.strategy,
        min_freq=cfg.min_freq,
        bucket_capacity=cfg.bucket_capacity,
        policy=cfg.policy,
        simhash_sparsity=cfg.simhash_sparsity,
        wta_bin_size=cfg.wta_bin_size,
        doph_top_k=cfg.doph_top_k,
        static_sample=cfg.static_sample or None,
        n0=cfg.n0,
        decay=cfg.decay,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        adam_beta1=cfg.adam_beta1,
        adam_beta2=cfg.adam_beta2,
        adam_eps=cfg.adam_eps,
        workers=cfg.workers,
        seed=cfg.seed,
        normalize=cfg.normalize,
    )


def evaluate(clf: SlideClassifier, ds: Dataset, subsample: int, seed: int):
    """P@1 and P@5 on a seeded fixed-size subsample of the dataset."""
    rng = np.random.default_rng(seed)
    n = len(ds.examples)
    idx = rng.choice(n, size=min(subsample, n), replace=False)
    p1 = p5 = 0.0
    for i in idx:
        x, labels = ds.examples[int(i)]
        ranked = clf.predict_ranked([x], topn=5)[0]
        p1 += precision_at_k(ranked, labels, 1)
        p5 += precision_at_k(ranked, labels, 5)
    return p1 / idx.size, p5 / idx.size


def run_train(cfg: RunConfig) -> Path:
    """Train per config; emit train_log.csv and final.ckpt in the out dir."""
    cfg.validate_paths()
    train_ds = load_xc_file(cfg.train)
    test_ds = load_xc_file(cfg.test) if cfg.test else train_ds
    clf = _classifier(cfg)
    rows = []
    losses, fractions = [], []
    t0 = time.perf_counter()

    def emit(iteration):
        p1, p5 = evaluate(clf, test_ds, cfg.eval_subsample, cfg.seed)
        rows.append(
            (
                iteration,
                round(time.perf_counter() - t0, 6),
                round(float(np.mean(losses)), 6),
                round(p1, 6),
                round(p5, 6),
                round(float(np.mean(fractions)) if fractions else 1.0, 6),
            )
        )
        losses.clear()
        fractions.clear()

    def on_batch(iteration, stats):
        losses.append(stats.loss)
        if stats.active_fraction:
            fractions.append(float(np.mean(list(stats.active_fraction.values()))))
        if iteration % cfg.eval_every == 0:
            emit(iteration)

    clf.fit(train_ds, on_batch=on_batch)
    if losses or not rows:
        emit(clf.n_iterations_)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(clf.network_, out / "final.ckpt")
    return _write_csv(
        out / "train_log.csv",
        cfg,
        [
            "iteration",
            "wall_seconds",
            "train_loss",
            "test_P@1",
            "test_P@5",
            "mean_active_fraction_per_lsh_layer",
        ],
        rows,
    )


def _bench_raw(rng, total: int, tables: int, width: int) -> RawCandidates:
    per_bucket = max(1, total // tables)
    per_table = [rng.integers(0, width, size=per_bucket).tolist() for _ in range(tables)]
    # within one bucket ids must be unique (one insertion per neuron per table)
    per_table = [sorted(set(ids)) for ids in per_table]
    return RawCandidates(per_table, width)


def _best_of(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench_samplers(cfg: RunConfig) -> Path:
    """Time the three strategies over identical raw candidate streams.

    Streams hold about twice the requested sample count so the early-exit
    behavior of vanilla sampling (cost linear in the target, not the
    stream) is visible in the timings.
    """
    rows = []
    for n in cfg.bench_sizes:
        rng = np.random.default_rng(cfg.seed)
        raw = _bench_raw(rng, 2 * n, cfg.bench_tables, width=4 * n)
        beta = n
        vrng = np.random.default_rng(cfg.seed + 1)
        rows.append(
            ("vanilla", n, _best_of(lambda: vanilla_sample(raw, SamplerConfig(beta=beta), vrng)))
        )
        rows.append(
            (
                "hard_threshold",
                n,
                _best_of(
                    lambda: hard_threshold_sample(
                        raw, SamplerConfig(strategy="hard_threshold", min_freq=2)
                    )
                ),
            )
        )
        rows.append(
            (
                "topk",
                n,
                _best_of(lambda: topk_sample(raw, SamplerConfig(strategy="topk", beta=beta))),
            )
        )
    return _write_csv(Path(cfg.out) / "bench_samplers.csv", cfg, ["strategy", "n", "seconds"], rows)


def run_bench_insertion(cfg: RunConfig) -> Path:
    """FIFO vs reservoir: bare table insertion and full build (with hashing)."""
    rng = np.random.default_rng(cfg.seed)
    w = rng.standard_normal((cfg.bench_neurons, cfg.bench_dim))
    family = new_hash_family(
        HashFamilyConfig(
            "simhash",
            cfg.bench_k,
            cfg.bench_tables,
            cfg.bench_dim,
            simhash_sparsity=cfg.simhash_sparsity,
            seed=cfg.seed,
        )
    )
    codes = family.hash_batch(w)
    rows = []
    for policy in ("reservoir", "fifo"):
        def fresh():
            return LshTables(family, policy=policy, capacity=cfg.bench_capacity, seed=cfg.seed)

        insert_s = _best_of(lambda: fresh().insert_codes(codes))
        full_s = _best_of(lambda: fresh().build(w))
        rows.append((policy, round(insert_s, 6), round(full_s, 6)))
    return _write_csv(
        Path(cfg.out) / "bench_insertion.csv",
        cfg,
        ["policy", "insert_to_ht_seconds", "full_insertion_seconds"],
        rows,
    )


def _scaling_dataset(cfg: RunConfig) -> Dataset:
    return synthetic_multilabel(
        cfg.scaling_examples,
        cfg.scaling_dim,
        cfg.scaling_labels,
        n_clusters=max(2, cfg.scaling_labels // 8),
        nnz=min(cfg.scaling_dim, 256),
        seed=cfg.seed,
    )


def run_scaling(cfg: RunConfig) -> Path:
    """Fixed-iteration training at several worker counts."""
    ds = _scaling_dataset(cfg)
    holdout = synthetic_multilabel(
        512,
        cfg.scaling_dim,
        cfg.scaling_labels,
        n_clusters=max(2, cfg.scaling_labels // 8),
        nnz=min(cfg.scaling_dim, 256),
        seed=cfg.seed + 1,
    )
    rows = []
    for workers in cfg.scaling_workers:
        clf = _classifier(
            replace(
                cfg,
                hidden=[cfg.scaling_hidden],
                workers=workers,
                beta=cfg.scaling_beta,
                epochs=1,
            )
        )
        net = clf._build_network(cfg.scaling_dim, cfg.scaling_labels)
        executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
        iteration = 0
        t0 = time.perf_counter()
        try:
            done = False
            for epoch in range(1000):
                if done:
                    break
                for batch in batches(ds, cfg.batch_size, seed=(cfg.seed, epoch)):
                    iteration += 1
                    net.train_batch(batch, iteration, workers=workers, executor=executor)
                    if iteration >= cfg.scaling_iterations:
                        done = True
                        break
        finally:
            if executor is not None:
                executor.shutdown(wait=True)
        seconds = time.perf_counter() - t0
        clf.network_ = net
        clf.n_features_in_ = cfg.scaling_dim
        clf.n_labels_ = cfg.scaling_labels
        p1, _ = evaluate(clf, holdout, 256, cfg.seed)
        rows.append((workers, round(seconds, 6), round(p1, 6)))
    return _write_csv(Path(cfg.out) / "bench_scaling.csv", cfg, ["workers", "seconds", "final_P@1"], rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slide", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "bench-samplers", "bench-insertion", "bench-scaling"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg.workers = args.workers
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        env_workers = os.environ.get("SLIDE_THREADS")
        if env_workers:
            cfg.workers = int(env_workers)
        cfg.validate_paths(need_train=args.command == "train")
        command = {
            "train": run_train,
            "bench-samplers": run_bench_samplers,
            "bench-insertion": run_bench_insertion,
            "bench-scaling": run_scaling,
        }[args.command]
        path = command(cfg)
        print(f"wrote {path}")
        return 0
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
