"""Writers for the engine's input files.

TACE layout (little-endian): magic "TACE", version u32 (1), rows u64,
dim u32, dtype u8 (0 = float32), 11 reserved bytes to a 32-byte header,
then the row-major float32 payload. The clustering engine's loaders are the
reference readers; the interop tests round-trip through them.
"""

from __future__ import annotations

import struct

import numpy as np

_HEADER = struct.Struct("<4sIQIB11x")


def write_tace(path: str, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(b"TACE", 1, matrix.shape[0], matrix.shape[1], 0))
        f.write(matrix.tobytes(order="C"))


def write_labels(path: str, labels) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for value in labels:
            f.write(f"{int(value)}\n")


def write_noun_list(path: str, nouns) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for noun in nouns:
            f.write(noun + "\n")


def write_manifest(path: str, name: str, images: str, nouns: str, k: int,
                   split: str = "", labels: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"name: {name}\n")
        f.write(f"images: {images}\n")
        if labels:
            f.write(f"labels: {labels}\n")
        f.write(f"nouns: {nouns}\n")
        f.write(f"K: {k}\n")
        f.write(f"split: {split}\n")


def normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x.astype(np.float64), axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding row")
    return (x / norms).astype(np.float32)
