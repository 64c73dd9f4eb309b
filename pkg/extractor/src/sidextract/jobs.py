"""Extraction jobs: image folders -> dataset files, text lists -> tensors.

A job assigns a (label, generator, split) triple to each image folder
under the root. Train images are augmented before encoding and may be
extracted several times (`variants`); validation and test images are
encoded exactly as they are, so re-running a job reproduces their rows
bit for bit. Undecodable images are skipped with a warning and recorded
in the manifest notes; a job that yields no records at all aborts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .augment import augment_train, preprocess_eval
from .encoders import DEFAULT_ENCODER, Encoder, make_encoder
from .formats import (
    write_dataset_files,
    write_pole_files,
    write_prompt_files,
    write_vocabulary_files,
)

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}
SPLITS = ("train", "val", "test")
_ENCODE_BATCH = 32


@dataclass(frozen=True)
class FolderSpec:
    path: str  # relative to the job's image root
    label: int
    generator: str
    split: str


@dataclass
class ExtractionJob:
    image_root: Path
    folders: list[FolderSpec]
    out_manifest: Path
    encoder: str = DEFAULT_ENCODER
    variants: int = 1  # augmented rows per train image
    seed: int = 123
    dataset_name: str = ""

    def validate(self) -> None:
        if self.variants < 1:
            raise ValueError("variants must be at least 1")
        if not self.folders:
            raise ValueError("no folders assigned")
        for folder in self.folders:
            if folder.split not in SPLITS:
                raise ValueError(f"folder {folder.path!r}: unknown split {folder.split!r}")
            if folder.label not in (0, 1):
                raise ValueError(f"folder {folder.path!r}: label must be 0 or 1")
            if (folder.label == 0) != (folder.generator == "real"):
                raise ValueError(
                    f"folder {folder.path!r}: label {folder.label} conflicts with "
                    f"generator {folder.generator!r}"
                )


def load_split_map(path: str | Path) -> list[FolderSpec]:
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        FolderSpec(
            path=str(row["path"]),
            label=int(row["label"]),
            generator=str(row["generator"]),
            split=str(row["split"]),
        )
        for row in spec["folders"]
    ]


def _folder_images(root: Path, folder: FolderSpec) -> list[Path]:
    base = root / folder.path
    if not base.is_dir():
        raise FileNotFoundError(f"image folder not found: {base}")
    return sorted(p for p in base.rglob("*") if p.suffix.lower() in IMAGE_EXTENSIONS)


def extract_images(job: ExtractionJob, encoder: Encoder | None = None) -> Path:
    """Run the encoder over every assigned image and write the dataset.

    Returns the manifest path. The projection head is exported once per
    dataset alongside the embedding tensors.
    """
    job.validate()
    encoder = make_encoder(job.encoder) if encoder is None else encoder
    rng = np.random.default_rng(job.seed)
    records: list[dict] = []
    pending: list[Image.Image] = []
    hidden_chunks: list[np.ndarray] = []
    joint_chunks: list[np.ndarray] = []
    notes: list[str] = []

    def flush() -> None:
        if pending:
            hidden, joint = encoder.encode_images(pending)
            hidden_chunks.append(hidden)
            joint_chunks.append(joint)
            pending.clear()

    for folder in job.folders:
        for image_path in _folder_images(job.image_root, folder):
            try:
                with Image.open(image_path) as img:
                    img.load()
                    base = img.copy()
            except (UnidentifiedImageError, OSError) as exc:
                message = f"skipped undecodable image {image_path.name}: {exc}"
                logger.warning(message)
                notes.append(message)
                continue
            rel_id = str((Path(folder.path) / image_path.stem).as_posix())
            if folder.split == "train":
                for variant in range(job.variants):
                    pending.append(augment_train(base, rng))
                    suffix = f"#a{variant}" if job.variants > 1 else ""
                    records.append(
                        {
                            "id": rel_id + suffix,
                            "label": folder.label,
                            "generator": folder.generator,
                            "split": folder.split,
                        }
                    )
                    if len(pending) >= _ENCODE_BATCH:
                        flush()
            else:
                pending.append(preprocess_eval(base))
                records.append(
                    {
                        "id": rel_id,
                        "label": folder.label,
                        "generator": folder.generator,
                        "split": folder.split,
                    }
                )
                if len(pending) >= _ENCODE_BATCH:
                    flush()
    flush()
    if not records:
        raise RuntimeError("extraction produced no records")
    hidden = np.concatenate(hidden_chunks).astype(np.float32)
    joint = np.concatenate(joint_chunks).astype(np.float32)
    name = job.dataset_name or job.out_manifest.stem
    write_dataset_files(
        job.out_manifest,
        name=name,
        records=records,
        hidden=hidden,
        joint=joint,
        projection=encoder.projection().astype(np.float32),
        notes=notes,
    )
    return job.out_manifest


def _embed(encoder: Encoder, texts: Sequence[str]) -> np.ndarray:
    if not texts:
        raise ValueError("no texts to embed")
    emb = encoder.encode_texts(list(texts))
    return (emb / np.linalg.norm(emb, axis=1, keepdims=True)).astype(np.float32)


def extract_plain_terms(
    terms: list[dict], out_tensor: Path, encoder: Encoder, template: str = "{}", name: str = ""
) -> None:
    """terms: [{name, category?, text?}] -> vocabulary tensor + sidecar."""
    texts = [template.format(t.get("text", t["name"])) for t in terms]
    emb = _embed(encoder, texts)
    write_vocabulary_files(
        out_tensor,
        emb,
        [{"name": t["name"], "category": t.get("category", "")} for t in terms],
        kind="plain",
        name=name or Path(out_tensor).stem,
    )


def extract_antonym_poles(
    entries: list[dict], out_tensor: Path, encoder: Encoder, template: str = "{}"
) -> None:
    """entries: [{name, category?, positive, negative}] -> pole tensor +
    sidecar; direction formation happens downstream."""
    texts = []
    meta = []
    for i, entry in enumerate(entries):
        texts.append(template.format(entry["positive"]))
        texts.append(template.format(entry["negative"]))
        meta.append(
            {
                "name": entry["name"],
                "category": entry.get("category", ""),
                "positive_row": 2 * i,
                "negative_row": 2 * i + 1,
            }
        )
    write_pole_files(out_tensor, _embed(encoder, texts), meta)


def extract_prompt_pairs(pairs: list[dict], out_tensor: Path, encoder: Encoder) -> None:
    """pairs: [{name, real_prompt, synthetic_prompt}] -> prompt tensor +
    pairing sidecar."""
    texts = []
    meta = []
    for i, pair in enumerate(pairs):
        texts.append(pair["real_prompt"])
        texts.append(pair["synthetic_prompt"])
        meta.append(
            {
                "name": pair["name"],
                "real_row": 2 * i,
                "synthetic_row": 2 * i + 1,
                "real_prompt": pair["real_prompt"],
                "synthetic_prompt": pair["synthetic_prompt"],
            }
        )
    write_prompt_files(out_tensor, _embed(encoder, texts), meta)
