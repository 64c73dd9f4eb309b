"""Planted-signal fixture generators for demos and verification.

These build small in-memory datasets with a known ground-truth
structure: a two-Gaussian task whose class separation lives on a single
hidden coordinate, and a concept task where exactly one vocabulary
concept's similarity separates the classes by sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datastore import EmbeddingDataset, EmbeddingRecord, Vocabulary, VocabularyTerm
from .numerics import orthogonal_init


@dataclass
class PlantedTask:
    dataset: EmbeddingDataset
    signal_dim: int  # hidden coordinate carrying the class separation


def _records(counts: dict[str, tuple[int, int]], generators: tuple[str, ...]) -> list[EmbeddingRecord]:
    records = []
    for split, (n_real, n_synth) in counts.items():
        for i in range(n_real):
            records.append(EmbeddingRecord(f"{split}-real-{i:04d}", 0, "real", split))
        for i in range(n_synth):
            gen = generators[i % len(generators)]
            records.append(EmbeddingRecord(f"{split}-syn-{i:04d}", 1, gen, split))
    return records


def make_planted_dataset(
    d: int = 64,
    p: int = 16,
    n_train: int = 400,
    n_val: int = 100,
    n_test: int = 200,
    separation: float = 1.0,
    signal_noise: float = 0.05,
    ambient_noise: float = 0.1,
    seed: int = 7,
    generators: tuple[str, ...] = ("planted",),
    shuffle_labels: bool = False,
) -> PlantedTask:
    """Two-Gaussian dataset with class means `separation` apart along
    one hidden coordinate (real at -separation/2, synthetic at
    +separation/2), `signal_noise` along that coordinate and
    `ambient_noise` everywhere else.

    Joint embeddings are the hidden states pushed through a random
    orthonormal projection, which is stored with the dataset, so the
    interpretation path works end to end. `shuffle_labels` permutes the
    labels to produce a no-signal control with identical marginals.
    """
    rng = np.random.default_rng(seed)
    signal_dim = int(rng.integers(0, d))
    counts = {
        "train": (n_train // 2, n_train - n_train // 2),
        "val": (n_val // 2, n_val - n_val // 2),
        "test": (n_test // 2, n_test - n_test // 2),
    }
    records = _records(counts, generators)
    labels = np.array([r.label for r in records], dtype=np.float64)
    n = len(records)
    hidden = rng.standard_normal((n, d)) * ambient_noise
    hidden[:, signal_dim] = (labels - 0.5) * separation + signal_noise * rng.standard_normal(n)
    projection = orthogonal_init(d, p, rng)
    joint = hidden @ projection
    if shuffle_labels:
        perm = rng.permutation(n)
        permuted = [records[i] for i in perm]
        records = [
            EmbeddingRecord(orig.id, src.label, src.generator, orig.split)
            for orig, src in zip(records, permuted)
        ]
    dataset = EmbeddingDataset(
        name="planted" if not shuffle_labels else "planted-shuffled",
        d=d,
        p=p,
        records=records,
        hidden=hidden.astype(np.float32),
        joint=joint.astype(np.float32),
        projection=projection.astype(np.float32),
    )
    return PlantedTask(dataset=dataset, signal_dim=signal_dim)


@dataclass
class PlantedConceptTask:
    dataset: EmbeddingDataset
    vocabulary: Vocabulary
    informative_concept: int


def make_planted_concept_task(
    p: int = 8,
    n_concepts: int = 6,
    n_train: int = 400,
    n_val: int = 100,
    n_test: int = 200,
    signal: float = 3.0,
    seed: int = 11,
    generators: tuple[str, ...] = ("planted",),
) -> PlantedConceptTask:
    """Concept task where only the first concept separates the classes.

    The vocabulary is the first `n_concepts` coordinate axes of the
    joint space; synthetic images sit at +signal and real images at
    -signal on the first axis, so that concept's cosine similarity
    separates the classes by sign, while every other coordinate is
    class-independent noise. The last coordinate carries a constant
    offset so the embeddings live in a cone, as encoder embeddings do;
    without it a bias-free gate could not modulate the mask globally.
    """
    if n_concepts > p - 1:
        raise ValueError("n_concepts must leave a free coordinate for the cone offset")
    rng = np.random.default_rng(seed)
    counts = {
        "train": (n_train // 2, n_train - n_train // 2),
        "val": (n_val // 2, n_val - n_val // 2),
        "test": (n_test // 2, n_test - n_test // 2),
    }
    records = _records(counts, generators)
    labels = np.array([r.label for r in records], dtype=np.float64)
    n = len(records)
    joint = rng.standard_normal((n, p))
    joint[:, 0] = np.where(labels == 1, signal, -signal) + 0.3 * rng.standard_normal(n)
    joint[:, p - 1] = signal + 0.3 * rng.standard_normal(n)
    vocabulary = Vocabulary(
        kind="plain",
        terms=[VocabularyTerm(f"concept-{j}", "planted") for j in range(n_concepts)],
        embeddings=np.eye(n_concepts, p, dtype=np.float32),
        name="planted-axes",
    )
    dataset = EmbeddingDataset(
        name="planted-concepts",
        d=p,
        p=p,
        records=records,
        hidden=joint.astype(np.float32),
        joint=joint.astype(np.float32),
        projection=np.eye(p, dtype=np.float32),
    )
    return PlantedConceptTask(dataset=dataset, vocabulary=vocabulary, informative_concept=0)
