"""Multimodal surgical workflow recognition with frequency-disentangled visual
streams, graph fusion, vision-kinematic adversarial alignment and a calibrated
decoder, built on a small numpy autodiff engine."""

from .config import ConfigError, RunConfig, load_config
from .corruption import KINDS, CorruptionSpec, corrupt, corrupt_dataset
from .data import WorkflowSequence, generate_dataset, load_dataset, save_dataset
from .metrics import MetricsReport, edit_score, evaluate_sequences, frame_accuracy
from .model import GradModel
from .train import ablate, evaluate, load_data, robustness_sweep, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "RunConfig", "load_config", "KINDS", "CorruptionSpec", "corrupt", "corrupt_dataset",
    "WorkflowSequence", "generate_dataset", "load_dataset", "save_dataset", "MetricsReport", "edit_score",
    "evaluate_sequences", "frame_accuracy", "GradModel", "ablate", "evaluate", "load_data", "robustness_sweep", "train",
]
