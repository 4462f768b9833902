"""SLIDE-style CPU training engine: hash-based adaptive neuron sampling."""

from .data import Dataset, batches, load_xc_file, precision_at_k, save_xc_file, synthetic_multilabel
from .estimator import SlideClassifier
from .hashing import HashFamily, HashFamilyConfig, new_hash_family
from .network import (
    LshLayerConfig,
    SlideNetwork,
    TrainConfig,
    TrainingDivergedError,
    apply_update,
    load_checkpoint,
    save_checkpoint,
    train_network,
)
from .samplers import SamplerConfig, SampleReport, retrieval_probability, sample
from .sparse import SparseVector
from .tables import LshTables, RawCandidates, RebuildSchedule

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "HashFamily",
    "HashFamilyConfig",
    "LshLayerConfig",
    "LshTables",
    "RawCandidates",
    "RebuildSchedule",
    "SampleReport",
    "SamplerConfig",
    "SlideClassifier",
    "SlideNetwork",
    "SparseVector",
    "TrainConfig",
    "TrainingDivergedError",
    "apply_update",
    "batches",
    "load_checkpoint",
    "load_xc_file",
    "new_hash_family",
    "precision_at_k",
    "retrieval_probability",
    "sample",
    "save_checkpoint",
    "save_xc_file",
    "synthetic_multilabel",
    "train_network",
]
