"""Embedding dataset files: JSON manifest plus tensor payloads.

A dataset is a manifest (UTF-8 JSON) naming two tensor files (per-image
hidden states, n x d, and joint-space embeddings, n x p), an optional
d x p projection matrix, and one metadata record per row. Datasets are
immutable after load; `select` returns filtered views.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tensorfile import read_tensor, write_tensor

SPLITS = ("train", "val", "test")
REAL_TAG = "real"

PLAIN = "plain"
ANTONYM_DIRECTION = "antonym_direction"
_VOCAB_KINDS = (PLAIN, ANTONYM_DIRECTION)
UNIT_NORM_TOL = 1e-5


class DatasetError(ValueError):
    """Malformed dataset manifest or payload."""


class VocabularyError(ValueError):
    """Malformed vocabulary file."""


@dataclass(frozen=True)
class EmbeddingRecord:
    """Per-image metadata; the vectors live in the dataset arrays."""

    id: str
    label: int
    generator: str
    split: str


@dataclass
class EmbeddingDataset:
    name: str
    d: int
    p: int
    records: list[EmbeddingRecord]
    hidden: np.ndarray  # (n, d) float32
    joint: np.ndarray  # (n, p) float32
    projection: np.ndarray | None = None  # (d, p) float32

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def generator_tags(self) -> list[str]:
        """Sorted synthetic generator tags present in the dataset."""
        return sorted({r.generator for r in self.records} - {REAL_TAG})

    def select(self, split: str, generators: Iterable[str] | None = None) -> "EmbeddingDataset":
        """View of the records in `split`, optionally narrowed to
        `generators` plus all real records.

        Original record order is preserved.
        """
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}, expected one of {SPLITS}")
        allowed: set[str] | None = None
        if generators is not None:
            generators = set(generators)
            known = {r.generator for r in self.records}
            unknown = generators - known
            if unknown:
                raise DatasetError(f"unknown generator tag(s): {sorted(unknown)}")
            allowed = generators | {REAL_TAG}
        keep = [
            i
            for i, r in enumerate(self.records)
            if r.split == split and (allowed is None or r.generator in allowed)
        ]
        idx = np.array(keep, dtype=np.intp)
        return EmbeddingDataset(
            name=self.name,
            d=self.d,
            p=self.p,
            records=[self.records[i] for i in keep],
            hidden=self.hidden[idx],
            joint=self.joint[idx],
            projection=self.projection,
        )


def _validate(
    name: str,
    d: int,
    p: int,
    records: Sequence[EmbeddingRecord],
    hidden: np.ndarray,
    joint: np.ndarray,
    projection: np.ndarray | None,
) -> None:
    if d <= 0 or p <= 0:
        raise DatasetError(f"dimensions must be positive, got d={d}, p={p}")
    n = len(records)
    if hidden.shape != (n, d):
        raise DatasetError(
            f"hidden tensor is {hidden.shape[0]}x{hidden.shape[1]}, "
            f"manifest declares {n} records of dimension {d}"
        )
    if joint.shape != (n, p):
        raise DatasetError(
            f"joint tensor is {joint.shape[0]}x{joint.shape[1]}, "
            f"manifest declares {n} records of dimension {p}"
        )
    if not np.all(np.isfinite(hidden)):
        i = int(np.flatnonzero(~np.isfinite(hidden).all(axis=1))[0])
        raise DatasetError(f"record {i}: non-finite hidden embedding")
    if not np.all(np.isfinite(joint)):
        i = int(np.flatnonzero(~np.isfinite(joint).all(axis=1))[0])
        raise DatasetError(f"record {i}: non-finite joint embedding")
    seen: dict[str, int] = {}
    for i, rec in enumerate(records):
        if rec.label not in (0, 1):
            raise DatasetError(f"record {i}: label must be 0 or 1, got {rec.label!r}")
        if rec.split not in SPLITS:
            raise DatasetError(f"record {i}: unknown split {rec.split!r}")
        if (rec.label == 0) != (rec.generator == REAL_TAG):
            raise DatasetError(
                f"record {i}: label {rec.label} conflicts with generator "
                f"{rec.generator!r} (label 0 iff generator == {REAL_TAG!r})"
            )
        if rec.id in seen:
            raise DatasetError(f"record {i}: duplicate id {rec.id!r} (first at record {seen[rec.id]})")
        seen[rec.id] = i
    if projection is not None:
        if projection.shape != (d, p):
            raise DatasetError(
                f"projection is {projection.shape[0]}x{projection.shape[1]}, expected {d}x{p}"
            )
        if not np.all(np.isfinite(projection)):
            raise DatasetError("non-finite values in projection matrix")


def load_dataset(manifest_path: str | Path) -> EmbeddingDataset:
    """Load and validate a dataset from its manifest file.

    Tensor paths in the manifest are resolved relative to the manifest
    directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DatasetError(f"missing manifest file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from exc
    for field in ("name", "d", "p", "embeddings_hidden_file", "embeddings_joint_file", "records"):
        if field not in manifest:
            raise DatasetError(f"{manifest_path}: missing manifest field {field!r}")
    base = manifest_path.parent
    records = []
    for i, row in enumerate(manifest["records"]):
        try:
            records.append(
                EmbeddingRecord(
                    id=str(row["id"]),
                    label=int(row["label"]),
                    generator=str(row["generator"]),
                    split=str(row["split"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"record {i}: invalid record entry ({exc})") from exc
    hidden = read_tensor(base / manifest["embeddings_hidden_file"])
    joint = read_tensor(base / manifest["embeddings_joint_file"])
    projection = None
    if manifest.get("projection_file"):
        projection = read_tensor(base / manifest["projection_file"])
    d, p = int(manifest["d"]), int(manifest["p"])
    _validate(manifest["name"], d, p, records, hidden, joint, projection)
    return EmbeddingDataset(
        name=str(manifest["name"]),
        d=d,
        p=p,
        records=records,
        hidden=hidden,
        joint=joint,
        projection=projection,
    )


def write_dataset(dataset: EmbeddingDataset, manifest_path: str | Path) -> None:
    """Write a dataset next to its manifest; round-trips bit-exactly."""
    manifest_path = Path(manifest_path)
    hidden = np.ascontiguousarray(dataset.hidden, dtype=np.float32)
    joint = np.ascontiguousarray(dataset.joint, dtype=np.float32)
    projection = (
        None if dataset.projection is None else np.ascontiguousarray(dataset.projection, dtype=np.float32)
    )
    _validate(dataset.name, dataset.d, dataset.p, dataset.records, hidden, joint, projection)
    stem = manifest_path.stem
    base = manifest_path.parent
    base.mkdir(parents=True, exist_ok=True)
    hidden_file = f"{stem}.hidden.sidt"
    joint_file = f"{stem}.joint.sidt"
    write_tensor(base / hidden_file, hidden)
    write_tensor(base / joint_file, joint)
    manifest: dict = {
        "name": dataset.name,
        "d": dataset.d,
        "p": dataset.p,
        "embeddings_hidden_file": hidden_file,
        "embeddings_joint_file": joint_file,
        "records": [
            {"id": r.id, "label": r.label, "generator": r.generator, "split": r.split}
            for r in dataset.records
        ],
    }
    if projection is not None:
        projection_file = f"{stem}.projection.sidt"
        write_tensor(base / projection_file, projection)
        manifest["projection_file"] = projection_file
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class VocabularyTerm:
    name: str
    category: str


@dataclass
class Vocabulary:
    """Named unit-norm text embeddings in the joint space."""

    kind: str  # "plain" or "antonym_direction"
    terms: list[VocabularyTerm]
    embeddings: np.ndarray  # (n, p) float32, unit rows
    name: str = ""

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def p(self) -> int:
        return self.embeddings.shape[1]

    def sha256(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.embeddings, dtype="<f4").tobytes())
        for t in self.terms:
            digest.update(t.name.encode("utf-8") + b"\x00" + t.category.encode("utf-8") + b"\x00")
        return digest.hexdigest()


def _validate_vocabulary(vocab: Vocabulary) -> None:
    if vocab.kind not in _VOCAB_KINDS:
        raise VocabularyError(f"unknown vocabulary kind {vocab.kind!r}")
    n = len(vocab.terms)
    if vocab.embeddings.shape[0] != n:
        raise VocabularyError(
            f"tensor has {vocab.embeddings.shape[0]} rows, name list has {n} entries"
        )
    if not np.all(np.isfinite(vocab.embeddings)):
        raise VocabularyError("non-finite vocabulary embedding")
    norms = np.linalg.norm(np.asarray(vocab.embeddings, dtype=np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
    if bad.size:
        i = int(bad[0])
        raise VocabularyError(
            f"term {vocab.terms[i].name!r} has norm {norms[i]:.6f}, expected unit norm"
        )
    seen: set[str] = set()
    for t in vocab.terms:
        if t.name in seen:
            raise VocabularyError(f"duplicate term name {t.name!r}")
        seen.add(t.name)


def default_names_path(tensor_path: str | Path) -> Path:
    return Path(tensor_path).with_suffix(".names.json")


def load_vocabulary(tensor_path: str | Path, names_path: str | Path | None = None) -> Vocabulary:
    """Load a vocabulary tensor and its name/category sidecar.

    The sidecar defaults to the tensor path with a `.names.json` suffix.
    Terms are returned in file order.
    """
    tensor_path = Path(tensor_path)
    names_path = default_names_path(tensor_path) if names_path is None else Path(names_path)
    if not names_path.is_file():
        raise VocabularyError(f"missing vocabulary sidecar: {names_path}")
    embeddings = read_tensor(tensor_path)
    meta = json.loads(names_path.read_text(encoding="utf-8"))
    terms = [
        VocabularyTerm(name=str(t["name"]), category=str(t.get("category", "")))
        for t in meta["terms"]
    ]
    vocab = Vocabulary(
        kind=str(meta.get("kind", PLAIN)),
        terms=terms,
        embeddings=embeddings,
        name=str(meta.get("name", tensor_path.stem)),
    )
    _validate_vocabulary(vocab)
    return vocab


def write_vocabulary(
    vocab: Vocabulary, tensor_path: str | Path, names_path: str | Path | None = None
) -> None:
    tensor_path = Path(tensor_path)
    names_path = default_names_path(tensor_path) if names_path is None else Path(names_path)
    _validate_vocabulary(vocab)
    tensor_path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(tensor_path, np.asarray(vocab.embeddings, dtype=np.float32))
    meta = {
        "kind": vocab.kind,
        "name": vocab.name or tensor_path.stem,
        "terms": [{"name": t.name, "category": t.category} for t in vocab.terms],
    }
    names_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def concatenate(datasets: Sequence[EmbeddingDataset], name: str | None = None) -> EmbeddingDataset:
    """Pool several datasets into one; record ids are prefixed with the
    source dataset name to keep them unique."""
    if not datasets:
        raise DatasetError("no datasets to concatenate")
    first = datasets[0]
    if len(datasets) == 1:
        return first
    for ds in datasets[1:]:
        if (ds.d, ds.p) != (first.d, first.p):
            raise DatasetError(
                f"dimension mismatch: {ds.name} is d={ds.d}, p={ds.p}, "
                f"expected d={first.d}, p={first.p}"
            )
    records = [
        EmbeddingRecord(id=f"{ds.name}/{r.id}", label=r.label, generator=r.generator, split=r.split)
        for ds in datasets
        for r in ds.records
    ]
    return EmbeddingDataset(
        name=name or "+".join(ds.name for ds in datasets),
        d=first.d,
        p=first.p,
        records=records,
        hidden=np.concatenate([ds.hidden for ds in datasets], axis=0),
        joint=np.concatenate([ds.joint for ds in datasets], axis=0),
        projection=first.projection,
    )
