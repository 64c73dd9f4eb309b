"""Zero-shot prompt-pair classification and antonym-direction vocabularies.

A prompt pair holds the text embeddings of one real-image description
and one synthetic-image description; an image's score is the logistic
of the (scaled) cosine-similarity gap between the two. Pair selection
picks the pair with the best per-generator mAP on a training split.

Antonym directions compress a positive/negative attribute prompt pair
into a single unit axis: normalize both poles, subtract negative from
positive, normalize again.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datastore import (
    ANTONYM_DIRECTION,
    EmbeddingDataset,
    Vocabulary,
    VocabularyError,
    VocabularyTerm,
)
from .metrics import evaluate_per_generator
from .numerics import normalize_rows, sigmoid
from .tensorfile import read_tensor, write_tensor

SCORE_SCALE = 100.0
_UNIT_TOL = 1e-5
_PARALLEL_FLOOR = 1e-10

_PROMPTS_RESOURCE = "zero_shot_prompts.json"


def packaged_prompt_texts() -> list[dict[str, str]]:
    """The ten stock prompt pairs (name, real_prompt, synthetic_prompt)
    shipped with the package; embed them with the extractor to get a
    prompt-pair tensor file."""
    from importlib import resources

    raw = resources.files("sidprobe").joinpath("data", _PROMPTS_RESOURCE).read_text("utf-8")
    return json.loads(raw)["pairs"]


class DegenerateDirection(ValueError):
    """Positive and negative poles too close to span a direction."""


def _check_unit(vec: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64).ravel()
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"{what} must be unit-norm, got norm {norm:.6f}")
    return v


@dataclass
class PromptPair:
    name: str
    real_embedding: np.ndarray  # unit vector, p
    synthetic_embedding: np.ndarray  # unit vector, p

    def __post_init__(self):
        self.real_embedding = _check_unit(self.real_embedding, f"pair {self.name!r} real embedding")
        self.synthetic_embedding = _check_unit(
            self.synthetic_embedding, f"pair {self.name!r} synthetic embedding"
        )


def zero_shot_scores(images: np.ndarray, pair: PromptPair) -> np.ndarray:
    """sigma(scale * (cos(image, synthetic) - cos(image, real)));
    monotone in the similarity gap, so ranking metrics ignore the scale."""
    img = normalize_rows(images, what="image embedding")
    gap = img @ pair.synthetic_embedding - img @ pair.real_embedding
    return sigmoid(SCORE_SCALE * gap)


def select_best_prompt(
    pairs: Sequence[PromptPair], train_view: EmbeddingDataset
) -> tuple[PromptPair, float]:
    """Pair with the highest per-generator mAP on the given split; ties
    keep the first pair in list order."""
    if not pairs:
        raise ValueError("empty prompt-pair list")
    best_pair = None
    best_map = -1.0
    for pair in pairs:
        scores = zero_shot_scores(train_view.joint.astype(np.float64), pair)
        report = evaluate_per_generator(scores, train_view.records)
        if report.map > best_map:
            best_map = report.map
            best_pair = pair
    return best_pair, best_map


def antonym_direction(positive: np.ndarray, negative: np.ndarray) -> np.ndarray:
    """Unit direction normalize(normalize(positive) - normalize(negative))."""
    pos = np.asarray(positive, dtype=np.float64).ravel()
    neg = np.asarray(negative, dtype=np.float64).ravel()
    pos_norm = np.linalg.norm(pos)
    neg_norm = np.linalg.norm(neg)
    if pos_norm < _PARALLEL_FLOOR or neg_norm < _PARALLEL_FLOOR:
        raise DegenerateDirection("pole embedding has zero norm")
    diff = pos / pos_norm - neg / neg_norm
    diff_norm = np.linalg.norm(diff)
    if diff_norm < _PARALLEL_FLOOR:
        raise DegenerateDirection("positive and negative poles are parallel")
    return diff / diff_norm


@dataclass
class AntonymEntry:
    name: str
    category: str
    positive_embedding: np.ndarray
    negative_embedding: np.ndarray


def build_antonym_vocabulary(entries: Sequence[AntonymEntry], name: str = "antonyms") -> Vocabulary:
    """One unit direction per attribute; aborts naming the attribute on
    any degenerate pole pair."""
    directions = []
    terms = []
    for entry in entries:
        try:
            directions.append(antonym_direction(entry.positive_embedding, entry.negative_embedding))
        except DegenerateDirection as exc:
            raise DegenerateDirection(f"attribute {entry.name!r}: {exc}") from exc
        terms.append(VocabularyTerm(name=entry.name, category=entry.category))
    return Vocabulary(
        kind=ANTONYM_DIRECTION,
        terms=terms,
        embeddings=np.array(directions, dtype=np.float32).reshape(len(terms), -1),
        name=name,
    )


def default_pairs_path(tensor_path: str | Path) -> Path:
    return Path(tensor_path).with_suffix(".pairs.json")


def load_prompt_pairs(
    tensor_path: str | Path, pairs_path: str | Path | None = None
) -> list[PromptPair]:
    """Prompt pairs from a tensor file of embeddings plus a sidecar
    listing, for each pair, its name and the two row indices."""
    tensor_path = Path(tensor_path)
    pairs_path = default_pairs_path(tensor_path) if pairs_path is None else Path(pairs_path)
    emb = read_tensor(tensor_path).astype(np.float64)
    meta = json.loads(pairs_path.read_text(encoding="utf-8"))
    pairs = []
    for row in meta["pairs"]:
        pairs.append(
            PromptPair(
                name=str(row["name"]),
                real_embedding=emb[int(row["real_row"])],
                synthetic_embedding=emb[int(row["synthetic_row"])],
            )
        )
    return pairs


def write_prompt_pairs(
    pairs: Sequence[PromptPair],
    tensor_path: str | Path,
    pairs_path: str | Path | None = None,
    prompts: Sequence[tuple[str, str]] | None = None,
) -> None:
    tensor_path = Path(tensor_path)
    pairs_path = default_pairs_path(tensor_path) if pairs_path is None else Path(pairs_path)
    rows = []
    meta = []
    for i, pair in enumerate(pairs):
        rows.append(pair.real_embedding)
        rows.append(pair.synthetic_embedding)
        entry = {"name": pair.name, "real_row": 2 * i, "synthetic_row": 2 * i + 1}
        if prompts is not None:
            entry["real_prompt"], entry["synthetic_prompt"] = prompts[i]
        meta.append(entry)
    write_tensor(tensor_path, np.array(rows, dtype=np.float32))
    pairs_path.write_text(json.dumps({"pairs": meta}, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def default_poles_path(tensor_path: str | Path) -> Path:
    return Path(tensor_path).with_suffix(".poles.json")


def load_antonym_entries(
    tensor_path: str | Path, poles_path: str | Path | None = None
) -> list[AntonymEntry]:
    """Attribute pole embeddings: tensor rows plus a sidecar mapping
    each attribute to its positive and negative row."""
    tensor_path = Path(tensor_path)
    poles_path = default_poles_path(tensor_path) if poles_path is None else Path(poles_path)
    emb = read_tensor(tensor_path).astype(np.float64)
    meta = json.loads(poles_path.read_text(encoding="utf-8"))
    entries = []
    for row in meta["entries"]:
        entries.append(
            AntonymEntry(
                name=str(row["name"]),
                category=str(row.get("category", "")),
                positive_embedding=emb[int(row["positive_row"])],
                negative_embedding=emb[int(row["negative_row"])],
            )
        )
    if not entries:
        raise VocabularyError(f"{poles_path}: no antonym entries")
    return entries


def write_antonym_entries(
    entries: Sequence[AntonymEntry],
    tensor_path: str | Path,
    poles_path: str | Path | None = None,
) -> None:
    tensor_path = Path(tensor_path)
    poles_path = default_poles_path(tensor_path) if poles_path is None else Path(poles_path)
    rows = []
    meta = []
    for i, entry in enumerate(entries):
        rows.append(np.asarray(entry.positive_embedding, dtype=np.float64).ravel())
        rows.append(np.asarray(entry.negative_embedding, dtype=np.float64).ravel())
        meta.append(
            {"name": entry.name, "category": entry.category, "positive_row": 2 * i, "negative_row": 2 * i + 1}
        )
    write_tensor(tensor_path, np.array(rows, dtype=np.float32))
    poles_path.write_text(
        json.dumps({"entries": meta}, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
