"""Writers for the detector's on-disk formats.

Tensor container: magic "SIDT", u32 version=1, u32 rows, u32 cols, then
rows*cols little-endian float32, row-major, one matrix per file. The
dataset manifest is a JSON file naming the tensor payloads and listing
one record per row. Vocabulary, antonym-pole, and prompt-pair tensors
carry JSON sidecars with the name metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SIDT"
VERSION = 1
_HEADER = struct.Struct("<III")


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad magic bytes")
    version, rows, cols = _HEADER.unpack_from(data, len(MAGIC))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    payload = data[len(MAGIC) + _HEADER.size :]
    if len(payload) != rows * cols * 4:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_dataset_files(
    manifest_path: str | Path,
    name: str,
    records: list[dict],
    hidden: np.ndarray,
    joint: np.ndarray,
    projection: np.ndarray | None,
    notes: list[str] | None = None,
) -> None:
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    stem = manifest_path.stem
    write_tensor(manifest_path.parent / f"{stem}.hidden.sidt", hidden)
    write_tensor(manifest_path.parent / f"{stem}.joint.sidt", joint)
    manifest = {
        "name": name,
        "d": int(hidden.shape[1]),
        "p": int(joint.shape[1]),
        "embeddings_hidden_file": f"{stem}.hidden.sidt",
        "embeddings_joint_file": f"{stem}.joint.sidt",
        "records": records,
    }
    if projection is not None:
        write_tensor(manifest_path.parent / f"{stem}.projection.sidt", projection)
        manifest["projection_file"] = f"{stem}.projection.sidt"
    if notes:
        manifest["notes"] = notes
    _dump_json(manifest_path, manifest)


def write_vocabulary_files(
    tensor_path: str | Path, embeddings: np.ndarray, terms: list[dict], kind: str, name: str
) -> None:
    tensor_path = Path(tensor_path)
    tensor_path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(tensor_path, embeddings)
    _dump_json(
        tensor_path.with_suffix(".names.json"),
        {"kind": kind, "name": name, "terms": terms},
    )


def write_pole_files(tensor_path: str | Path, embeddings: np.ndarray, entries: list[dict]) -> None:
    tensor_path = Path(tensor_path)
    tensor_path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(tensor_path, embeddings)
    _dump_json(tensor_path.with_suffix(".poles.json"), {"entries": entries})


def write_prompt_files(tensor_path: str | Path, embeddings: np.ndarray, pairs: list[dict]) -> None:
    tensor_path = Path(tensor_path)
    tensor_path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(tensor_path, embeddings)
    _dump_json(tensor_path.with_suffix(".pairs.json"), {"pairs": pairs})
