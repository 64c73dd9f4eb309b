"""Synthetic-image detectors on frozen vision-language embeddings:
linear heads with decorrelated features, sparse concept bottlenecks,
zero-shot prompt classification, and the evaluation and interpretation
machinery around them."""

from .datastore import (
    EmbeddingDataset,
    EmbeddingRecord,
    Vocabulary,
    VocabularyTerm,
    load_dataset,
    load_vocabulary,
    write_dataset,
    write_vocabulary,
)
from .linear_head import LinearHeadModel, TrainConfig, train
from .concept import ConceptModel, ConceptTrainConfig, train_concept
from .metrics import average_precision, auc, evaluate_per_generator, optimal_balanced_threshold
from .zeroshot import PromptPair, antonym_direction, build_antonym_vocabulary, zero_shot_scores

__version__ = "0.1.0"

__all__ = [
    "EmbeddingDataset",
    "EmbeddingRecord",
    "Vocabulary",
    "VocabularyTerm",
    "load_dataset",
    "load_vocabulary",
    "write_dataset",
    "write_vocabulary",
    "LinearHeadModel",
    "TrainConfig",
    "train",
    "ConceptModel",
    "ConceptTrainConfig",
    "train_concept",
    "average_precision",
    "auc",
    "evaluate_per_generator",
    "optimal_balanced_threshold",
    "PromptPair",
    "antonym_direction",
    "build_antonym_vocabulary",
    "zero_shot_scores",
]
