"""Deterministic numerical kernels: normalization, cosine similarity,
temperature softmax, and a seedable counter-based RNG.

Storage convention: embeddings are float32; dot products and loss sums
accumulate in float64.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NormalizationError, ParameterError

# Named RNG streams, one per randomized subsystem. A (seed, stream) pair
# fully determines the draw sequence regardless of what other streams do.
STREAM_KMEANS_INIT = 1
STREAM_SHUFFLE = 2
STREAM_NEIGHBOR_SAMPLE = 3
STREAM_WEIGHT_INIT = 4
STREAM_FIXTURE = 9


class RngState:
    """Counter-based (Philox) RNG keyed by (seed, stream).

    Identical (seed, stream) pairs reproduce identical draw sequences across
    runs and platforms. A state is single-owner: never share one instance
    across concurrent tasks, split a new stream instead.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF,
                        self.stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, stream: int) -> "RngState":
        """Fresh independent state on another stream of the same seed."""
        return RngState(self.seed, stream)

    def uniform_int(self, n: int) -> int:
        if n < 1:
            raise ParameterError(f"uniform_int needs n >= 1, got {n}")
        return int(self._gen.integers(0, n))

    def uniform_ints(self, n: int, size: int) -> np.ndarray:
        if n < 1:
            raise ParameterError(f"uniform_ints needs n >= 1, got {n}")
        return self._gen.integers(0, n, size=size)

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def rng_uniform_int(state: RngState, n: int) -> int:
    """Uniform draw from [0, n), advancing the state."""
    return state.uniform_int(n)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit norm. Zero vectors raise NormalizationError."""
    v = np.asarray(v)
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm == 0.0 or not np.isfinite(norm):
        raise NormalizationError("cannot normalize a zero or non-finite vector")
    return (v / norm).astype(v.dtype if v.dtype.kind == "f" else np.float64)


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Unit-normalize each row of a 2-D matrix."""
    x = np.asarray(x)
    norms = np.linalg.norm(x.astype(np.float64), axis=1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise NormalizationError("matrix contains a zero or non-finite row")
    out = x / norms[:, None].astype(x.dtype if x.dtype.kind == "f" else np.float64)
    return out.astype(x.dtype if x.dtype.kind == "f" else np.float64)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors, accumulated in float64."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    na = np.linalg.norm(a64)
    nb = np.linalg.norm(b64)
    if na == 0.0 or nb == 0.0:
        raise NormalizationError("cosine similarity of a zero vector is undefined")
    return float(np.dot(a64, b64) / (na * nb))


def softmax_temp(scores: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise softmax of scores / tau with the max subtracted first.

    Works on 1-D score vectors and 2-D score matrices (softmax per row).
    Without the max shift, tau around 5e-3 overflows exp().
    """
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    s = np.asarray(scores, dtype=np.float64) / tau
    if s.ndim == 1:
        s = s - s.max()
        e = np.exp(s)
        return e / e.sum()
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)
