"""Embedding extractor: frozen-encoder image and text embeddings
exported in the detector's dataset, vocabulary, and prompt formats."""

from .encoders import DEFAULT_ENCODER, HFClipEncoder, StubEncoder, make_encoder
from .jobs import (
    ExtractionJob,
    FolderSpec,
    extract_antonym_poles,
    extract_images,
    extract_plain_terms,
    extract_prompt_pairs,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ENCODER",
    "HFClipEncoder",
    "StubEncoder",
    "make_encoder",
    "ExtractionJob",
    "FolderSpec",
    "extract_images",
    "extract_plain_terms",
    "extract_antonym_poles",
    "extract_prompt_pairs",
]
