"""Misinformation detection from text-image pairs.

The pipeline segments a post's text, synthesizes one image feature per
segment, fuses everything through a relationship graph and two stages of
cross-attention, and trains the detector and the generator in
alternation.  Modality contributions are measured after the fact by the
entropy gain of ablated inputs over the full model.
"""

from .cache import FeatureCache
from .config import ExperimentConfig, apply_ablation
from .data import Dataset, PairedImageTextDataset, Sample, load_dataset, load_paired_dataset
from .errors import (
    CacheMissError,
    ConfigError,
    ContractError,
    EvaluationError,
    GenerationError,
    IngestionError,
    NumericError,
    RemoteBackendError,
    RetsimdError,
    ValidationError,
)
from .evaluation import ContributionReport, VariantKind, evaluate_contributions
from .generator import MockGenerator, RemoteGenerator
from .model import Detector, DetectorParams, ModelConfig
from .segmentation import SegmentationConfig, SegmentStrategy
from .synth import SyntheticSpec, synth_dataset, synth_paired_dataset
from .training import Checkpoint, TrainConfig, TrainState, train

__version__ = "0.1.0"

__all__ = [
    "CacheMissError",
    "Checkpoint",
    "ConfigError",
    "ContractError",
    "ContributionReport",
    "Dataset",
    "Detector",
    "DetectorParams",
    "EvaluationError",
    "ExperimentConfig",
    "FeatureCache",
    "GenerationError",
    "IngestionError",
    "MockGenerator",
    "ModelConfig",
    "NumericError",
    "PairedImageTextDataset",
    "RemoteBackendError",
    "RemoteGenerator",
    "RetsimdError",
    "Sample",
    "SegmentationConfig",
    "SegmentStrategy",
    "SyntheticSpec",
    "TrainConfig",
    "TrainState",
    "ValidationError",
    "VariantKind",
    "apply_ablation",
    "evaluate_contributions",
    "load_dataset",
    "load_paired_dataset",
    "synth_dataset",
    "synth_paired_dataset",
    "train",
    "__version__",
]
