"""Desk-scale human-object interaction detection with dual query enhancement."""

from .config import (ModelConfig, ProviderConfig, RunConfig, SyntheticWorldConfig,
                     TrainConfig)
from .data import Annotation, Dataset, GroundTruthInstance, load_dataset, save_dataset
from .evaluation import EvalResult, evaluate, evaluate_object_detection
from .network import HOIDetector, build_model
from .retrieval import MockEmbeddingProvider, candidate_coverage
from .synthetic import build_synthetic_vocabulary, generate_synthetic_dataset
from .training import run_ablation, train
from .vocabulary import HOIVocabulary

__all__ = [
    "Annotation", "Dataset", "EvalResult", "GroundTruthInstance", "HOIDetector",
    "HOIVocabulary", "MockEmbeddingProvider", "ModelConfig", "ProviderConfig",
    "RunConfig", "SyntheticWorldConfig", "TrainConfig", "build_model",
    "build_synthetic_vocabulary", "candidate_coverage", "evaluate",
    "evaluate_object_detection", "generate_synthetic_dataset", "load_dataset",
    "run_ablation", "save_dataset", "train",
]

__version__ = "0.1.0"
