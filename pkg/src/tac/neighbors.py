"""Exact k-nearest-neighbor graph under cosine similarity, plus the
per-step random-neighbor sampler used during mutual distillation.

Graphs are built once on frozen embeddings (heads train, embeddings do not),
so there is no refresh path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import RngState, normalize_rows
from .errors import FormatError, ParameterError

_CACHE_HEADER = struct.Struct("<QI")


@dataclass
class NeighborGraph:
    """Row i lists the n_neighbors nearest rows to i (self excluded),
    ordered by descending similarity, exact ties broken by lower index."""

    n_neighbors: int
    indices: np.ndarray  # uint32[N x n_neighbors]

    @property
    def n(self) -> int:
        return self.indices.shape[0]


def build_graph(x: np.ndarray, n_neighbors: int, block: int = 1024) -> NeighborGraph:
    """Exact top-k by cosine over all rows, blockwise to bound memory."""
    n = np.asarray(x).shape[0]
    if n_neighbors < 1 or n_neighbors >= n:
        raise ParameterError(
            f"n_neighbors must be in [1, {n - 1}], got {n_neighbors}")
    x = normalize_rows(np.asarray(x, dtype=np.float32))
    out = np.empty((n, n_neighbors), dtype=np.uint32)
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = x[start:stop] @ x.T
        for row in range(start, stop):
            s = sims[row - start]
            s[row] = -np.inf  # self excluded
            out[row] = _topk_desc(s, n_neighbors)
    return NeighborGraph(n_neighbors=n_neighbors, indices=out)


def _topk_desc(sims: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values, descending, ties to lower index."""
    n = sims.shape[0]
    kth = np.partition(sims, n - k)[n - k]
    gt = np.flatnonzero(sims > kth)
    eq = np.flatnonzero(sims == kth)[: k - gt.size]
    cand = np.concatenate([gt, eq])
    # stable sort keeps ascending-index order within equal similarities
    order = np.argsort(-sims[cand], kind="stable")
    return cand[order].astype(np.uint32)


def sample_neighbor(g: NeighborGraph, i: int, rng: RngState) -> int:
    """Uniform draw from row i's neighbor list."""
    return int(g.indices[i, rng.uniform_int(g.n_neighbors)])


def sample_neighbors(g: NeighborGraph, rows: np.ndarray, rng: RngState) -> np.ndarray:
    """One fresh uniform neighbor per listed row (vectorized batch form)."""
    picks = rng.uniform_ints(g.n_neighbors, size=len(rows))
    return g.indices[np.asarray(rows), picks].astype(np.int64)


def save_graph(path: str, g: NeighborGraph) -> None:
    with open(path, "wb") as f:
        f.write(_CACHE_HEADER.pack(g.n, g.n_neighbors))
        f.write(np.ascontiguousarray(g.indices, dtype="<u4").tobytes())


def load_graph(path: str) -> NeighborGraph:
    with open(path, "rb") as f:
        header = f.read(_CACHE_HEADER.size)
        if len(header) < _CACHE_HEADER.size:
            raise FormatError(f"{path}: truncated graph cache header")
        n, n_neighbors = _CACHE_HEADER.unpack(header)
        payload = f.read()
    expected = n * n_neighbors * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}")
    indices = np.frombuffer(payload, dtype="<u4").reshape(n, n_neighbors)
    return NeighborGraph(n_neighbors=int(n_neighbors), indices=indices.copy())
