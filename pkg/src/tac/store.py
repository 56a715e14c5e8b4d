"""On-disk formats and containers for embeddings, labels, noun vocabularies
and dataset manifests.

TACE binary layout (little-endian, 32-byte header):
    magic   4s   b"TACE"
    version u32  1
    rows    u64
    dim     u32
    dtype   u8   0 = float32
    pad     11 bytes reserved
    payload rows*dim float32, row-major

Files ending in .tsv or .txt are read as plain-text rows (one embedding per
line, whitespace-separated) so small fixtures stay hand-authorable.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import normalize_rows
from .errors import DataError, DimensionError, FormatError

TACE_MAGIC = b"TACE"
TACE_VERSION = 1
_HEADER = struct.Struct("<4sIQIB11x")
assert _HEADER.size == 32

_TEXT_SUFFIXES = (".tsv", ".txt")


def write_embeddings(path: str, x: np.ndarray) -> None:
    """Write a 2-D float matrix in the TACE binary format."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise DimensionError(f"expected 2-D matrix, got shape {x.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(TACE_MAGIC, TACE_VERSION, x.shape[0], x.shape[1], 0))
        f.write(x.tobytes(order="C"))


def load_embeddings(path: str, normalize: bool = False) -> np.ndarray:
    """Load an embedding matrix (TACE binary, or TSV for .tsv/.txt paths).

    With normalize=True every row is unit-normalized after loading.
    """
    if str(path).endswith(_TEXT_SUFFIXES):
        x = _load_tsv(path)
    else:
        x = _load_tace(path)
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise DataError(f"{path}: empty matrix ({x.shape[0]}x{x.shape[1]})")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: payload contains NaN or Inf")
    if normalize:
        x = normalize_rows(x)
    return x


def _load_tace(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: file shorter than header")
        magic, version, rows, dim, dtype_code = _HEADER.unpack(header)
        if magic != TACE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != TACE_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if dtype_code != 0:
            raise FormatError(f"{path}: unknown dtype code {dtype_code}")
        payload = f.read()
    expected = rows * dim * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}")
    x = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return np.ascontiguousarray(x)


def _load_tsv(path: str) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals = [float(v) for v in line.split()]
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: unparsable row ({e})") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise FormatError(
                    f"{path}:{lineno}: row has {len(vals)} values, expected {width}")
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no rows")
    return np.asarray(rows, dtype=np.float32)


def write_labels(path: str, labels) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for v in labels:
            f.write(f"{int(v)}\n")


def load_labels(path: str, expected_n: int) -> np.ndarray:
    """Newline-delimited non-negative integers, one per input row."""
    labels = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                v = int(line)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not an integer: {line!r}") from None
            if v < 0:
                raise FormatError(f"{path}:{lineno}: negative label {v}")
            labels.append(v)
    if len(labels) != expected_n:
        raise DataError(f"{path}: {len(labels)} labels, expected {expected_n}")
    return np.asarray(labels, dtype=np.int64)


def canonical_noun(s: str) -> str:
    return " ".join(s.split()).lower()


@dataclass
class NounVocabulary:
    """Noun strings paired row-for-row with their prompted embeddings."""

    nouns: list[str]
    embeddings: np.ndarray

    def __post_init__(self):
        if len(self.nouns) != self.embeddings.shape[0]:
            raise DimensionError(
                f"{len(self.nouns)} nouns but {self.embeddings.shape[0]} embedding rows")
        seen = set()
        for n in self.nouns:
            c = canonical_noun(n)
            if c in seen:
                raise DataError(f"duplicate noun after canonicalization: {n!r}")
            seen.add(c)

    def __len__(self) -> int:
        return len(self.nouns)


def load_vocabulary(noun_path: str, embedding_path: str,
                    normalize: bool = True) -> NounVocabulary:
    """One noun per line, order-aligned with a TACE file of embeddings."""
    with open(noun_path, "r", encoding="utf-8") as f:
        nouns = [line.strip() for line in f if line.strip()]
    if not nouns:
        raise DataError(f"{noun_path}: no nouns")
    emb = load_embeddings(embedding_path, normalize=normalize)
    return NounVocabulary(nouns=nouns, embeddings=emb)


MANIFEST_KEYS = ("name", "images", "labels", "nouns", "K", "split")


@dataclass
class DatasetManifest:
    """Paths and target cluster count for one dataset; the ingestion unit."""

    name: str
    images: str
    nouns: str
    k: int
    split: str = ""
    labels: str | None = None
    base_dir: str = field(default="", repr=False)

    def path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    @property
    def image_path(self) -> str:
        return self.path(self.images)

    @property
    def label_path(self) -> str | None:
        return self.path(self.labels) if self.labels else None

    @property
    def noun_text_path(self) -> str:
        return self.path(self.nouns)

    @property
    def noun_embedding_path(self) -> str:
        return noun_embedding_path(self.noun_text_path)


def load_manifest(path: str, check_files: bool = True) -> DatasetManifest:
    """Parse a key-value manifest (keys: name, images, labels, nouns, K, split)."""
    entries = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key: value'")
            key, _, value = line.partition(":")
            key = key.strip()
            if key not in MANIFEST_KEYS:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            entries[key] = value.strip()
    for key in ("name", "images", "nouns", "K"):
        if key not in entries or not entries[key]:
            raise FormatError(f"{path}: missing required key {key!r}")
    try:
        k = int(entries["K"])
    except ValueError:
        raise FormatError(f"{path}: K must be an integer") from None
    if k < 2:
        raise DataError(f"{path}: target K must be >= 2, got {k}")
    m = DatasetManifest(
        name=entries["name"],
        images=entries["images"],
        nouns=entries["nouns"],
        k=k,
        split=entries.get("split", ""),
        labels=entries.get("labels") or None,
        base_dir=os.path.dirname(os.path.abspath(path)),
    )
    if check_files:
        required = [m.image_path, m.noun_text_path, m.noun_embedding_path]
        if m.label_path:
            required.append(m.label_path)
        for p in required:
            if not os.path.exists(p):
                raise FormatError(f"{path}: referenced file does not exist: {p}")
    return m


def noun_embedding_path(noun_txt_path: str) -> str:
    """The prompted-noun TACE matrix sits next to the noun list: <stem>.tace."""
    stem, _ = os.path.splitext(noun_txt_path)
    return stem + ".tace"


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


def concat_features(a: np.ndarray, b: np.ndarray, renormalize: bool = True) -> np.ndarray:
    """Row-wise [a_i || b_i] with each half unit-normalized first.

    Counterparts are convex combinations with norm < 1; without the per-half
    renormalization the modalities would be silently reweighted in k-means.
    Pass renormalize=False to concatenate raw halves.
    """
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    if renormalize:
        a = normalize_rows(a)
        b = normalize_rows(b)
    return np.concatenate([a, b], axis=1)
