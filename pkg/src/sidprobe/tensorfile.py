"""Single-matrix binary container used by all on-disk tensor payloads.

Layout: magic bytes "SIDT", then three little-endian u32 values
(version, rows, cols), then rows*cols little-endian float32 values in
row-major order. One matrix per file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SIDT"
VERSION = 1
_HEADER = struct.Struct("<III")


class TensorFileError(ValueError):
    """Malformed or inconsistent tensor file."""


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise TensorFileError(f"expected a 2-d array, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise TensorFileError(f"missing tensor file: {path}")
    data = path.read_bytes()
    if len(data) < len(MAGIC) + _HEADER.size:
        raise TensorFileError(f"{path}: truncated header")
    if data[: len(MAGIC)] != MAGIC:
        raise TensorFileError(f"{path}: bad magic bytes {data[:4]!r}")
    version, rows, cols = _HEADER.unpack_from(data, len(MAGIC))
    if version != VERSION:
        raise TensorFileError(f"{path}: unsupported version {version}")
    payload = data[len(MAGIC) + _HEADER.size :]
    expected = rows * cols * 4
    if len(payload) != expected:
        raise TensorFileError(
            f"{path}: payload holds {len(payload) // 4} floats, header declares {rows}x{cols}"
        )
    out = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    return np.array(out, dtype=np.float32)
