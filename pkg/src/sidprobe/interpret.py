"""Attribution and vocabulary-grounding tools for trained detectors.

Covers per-feature logit contributions and their class-mean difference,
projection of learned directions into the joint text-image space,
vocabulary ranking against those directions, per-concept statistics for
concept models, and retrieval of the samples that drive each feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .concept import ConceptModel, mask_posterior, similarity_matrix
from .datastore import ANTONYM_DIRECTION, EmbeddingDataset, Vocabulary
from .linear_head import MODE_ORTHOGONAL, LinearHeadModel, forward
from .metrics import auc
from .numerics import normalize_rows

_DIRECTION_NORM_FLOOR = 1e-12


def logit_contributions(model: LinearHeadModel, activations: np.ndarray) -> np.ndarray:
    """Per-sample, per-feature logit contributions a[i, j] * w[j].

    Rows sum to the model logits exactly; only defined for the
    two-layer head.
    """
    if model.mode != MODE_ORTHOGONAL:
        raise ValueError(f"contributions need mode {MODE_ORTHOGONAL!r}, got {model.mode!r}")
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != model.k:
        raise ValueError(f"activations are {a.shape}, model has k={model.k}")
    return a * model.logit_weights[:, 0][None, :]


def class_contribution_diff(
    contributions: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Class-conditional contribution means and their difference.

    Returns (mu_synthetic, mu_real, delta) where delta = mu_synthetic -
    mu_real; positive entries push toward the synthetic class.
    """
    c = np.asarray(contributions, dtype=np.float64)
    y = np.asarray(labels).ravel()
    if c.shape[0] != y.size:
        raise ValueError("contributions and labels disagree in length")
    if not ((y == 1).any() and (y == 0).any()):
        raise ValueError("both classes must be present")
    mu1 = c[y == 1].mean(axis=0)
    mu0 = c[y == 0].mean(axis=0)
    return mu1, mu0, mu1 - mu0


@dataclass
class ContributionReport:
    contributions: np.ndarray  # (m, k)
    mu_synthetic: np.ndarray  # (k,)
    mu_real: np.ndarray  # (k,)
    delta: np.ndarray  # (k,)


def build_contribution_report(
    model: LinearHeadModel, inputs: np.ndarray, labels: np.ndarray
) -> ContributionReport:
    activations, _ = forward(model, inputs)
    contribs = logit_contributions(model, activations)
    mu1, mu0, delta = class_contribution_diff(contribs, labels)
    return ContributionReport(contributions=contribs, mu_synthetic=mu1, mu_real=mu0, delta=delta)


def project_directions(feature_weights: np.ndarray, projection: np.ndarray) -> np.ndarray:
    """Learned directions carried into the joint space: column j is the
    unit-normalized projection.T @ feature_weights[:, j]."""
    w = np.asarray(feature_weights, dtype=np.float64)
    proj = np.asarray(projection, dtype=np.float64)
    if proj.shape[0] != w.shape[0]:
        raise ValueError(f"projection is {proj.shape}, feature weights are {w.shape}")
    directions = proj.T @ w  # (p, k)
    norms = np.linalg.norm(directions, axis=0)
    bad = np.flatnonzero(norms < _DIRECTION_NORM_FLOOR)
    if bad.size:
        raise ValueError(f"degenerate direction for column {int(bad[0])}")
    return directions / norms[None, :]


@dataclass(frozen=True)
class RankedTerm:
    name: str
    similarity: float


@dataclass
class VocabularyRanking:
    """Top vocabulary matches per learned direction.

    Antonym vocabularies rank by absolute similarity but report the
    signed value; plain vocabularies rank by the raw value.
    """

    vocabulary_name: str
    vocabulary_kind: str
    per_direction: list[list[RankedTerm]]


def rank_vocabulary(directions: np.ndarray, vocabulary: Vocabulary, top: int = 5) -> VocabularyRanking:
    dirs = np.asarray(directions, dtype=np.float64)
    if dirs.shape[0] != vocabulary.p:
        raise ValueError(
            f"directions live in {dirs.shape[0]} dimensions, vocabulary in {vocabulary.p}"
        )
    emb = normalize_rows(np.asarray(vocabulary.embeddings, dtype=np.float64), what="vocabulary embedding")
    sims = dirs.T @ emb.T  # (k, n)
    by_magnitude = vocabulary.kind == ANTONYM_DIRECTION
    ranked: list[list[RankedTerm]] = []
    for j in range(sims.shape[0]):
        key = np.abs(sims[j]) if by_magnitude else sims[j]
        order = np.argsort(-key, kind="stable")[:top]
        ranked.append([RankedTerm(vocabulary.terms[i].name, float(sims[j, i])) for i in order])
    return VocabularyRanking(
        vocabulary_name=vocabulary.name, vocabulary_kind=vocabulary.kind, per_direction=ranked
    )


@dataclass(frozen=True)
class ConceptStat:
    name: str
    category: str
    mean_contribution_real: float
    mean_contribution_synthetic: float
    activation_rate_real: float
    activation_rate_synthetic: float
    auc: float


def concept_report(
    model: ConceptModel,
    dataset: EmbeddingDataset,
    vocabulary: Vocabulary,
    top: int | None = None,
) -> list[ConceptStat]:
    """Per-concept class statistics, sorted by single-feature AUC.

    The per-concept score is the masked contribution S * q * w; a
    concept is counted as activated when q >= 0.5.
    """
    labels = dataset.labels
    if not ((labels == 1).any() and (labels == 0).any()):
        raise ValueError("both classes must be present")
    images = dataset.joint.astype(np.float64)
    sims = similarity_matrix(images, vocabulary)
    q = mask_posterior(images, model.gate_weights)
    contrib = sims * q * model.concept_weights[:, 0][None, :]  # (m, n)
    active = q >= 0.5
    real = labels == 0
    synth = labels == 1
    stats = []
    for j, term in enumerate(vocabulary.terms):
        col = contrib[:, j]
        stats.append(
            ConceptStat(
                name=term.name,
                category=term.category,
                mean_contribution_real=float(col[real].mean()),
                mean_contribution_synthetic=float(col[synth].mean()),
                activation_rate_real=float(active[real, j].mean()),
                activation_rate_synthetic=float(active[synth, j].mean()),
                auc=float(auc(col, labels)),
            )
        )
    stats.sort(key=lambda s: -s.auc)
    return stats if top is None else stats[:top]


def top_activating_samples(
    activations: np.ndarray, record_ids: Sequence[str], column: int, count: int
) -> tuple[list[str], list[str]]:
    """Ids of the `count` largest and smallest activations along one
    feature column; ties keep record order."""
    a = np.asarray(activations, dtype=np.float64)
    if not 0 <= column < a.shape[1]:
        raise ValueError(f"invalid column {column} for {a.shape[1]} features")
    if count > a.shape[0]:
        raise ValueError(f"count {count} exceeds {a.shape[0]} samples")
    col = a[:, column]
    highest = np.argsort(-col, kind="stable")[:count]
    lowest = np.argsort(col, kind="stable")[:count]
    return [record_ids[i] for i in highest], [record_ids[i] for i in lowest]


def write_delta_mu_csv(report: ContributionReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["direction", "mu_synthetic", "mu_real", "delta_mu"])
        for j in range(report.delta.size):
            writer.writerow(
                [j, f"{report.mu_synthetic[j]:.6f}", f"{report.mu_real[j]:.6f}", f"{report.delta[j]:.6f}"]
            )


def write_ranking_csv(ranking: VocabularyRanking, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["direction", "rank", "term", "similarity"])
        for j, terms in enumerate(ranking.per_direction):
            for rank, term in enumerate(terms, start=1):
                writer.writerow([j, rank, term.name, f"{term.similarity:.6f}"])


def write_concept_stats_csv(stats: Sequence[ConceptStat], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "concept",
                "category",
                "mean_contribution_real",
                "mean_contribution_synthetic",
                "activation_rate_real",
                "activation_rate_synthetic",
                "auc",
            ]
        )
        for s in stats:
            writer.writerow(
                [
                    s.name,
                    s.category,
                    f"{s.mean_contribution_real:.6f}",
                    f"{s.mean_contribution_synthetic:.6f}",
                    f"{s.activation_rate_real:.6f}",
                    f"{s.activation_rate_synthetic:.6f}",
                    f"{s.auc:.6f}",
                ]
            )


def write_top_samples_csv(
    rows: Sequence[tuple[int, list[str], list[str]]], path: str | Path
) -> None:
    """Rows of (direction, highest ids, lowest ids)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["direction", "end", "rank", "id"])
        for direction, highest, lowest in rows:
            for rank, rec_id in enumerate(highest, start=1):
                writer.writerow([direction, "high", rank, rec_id])
            for rank, rec_id in enumerate(lowest, start=1):
                writer.writerow([direction, "low", rank, rec_id])
