"""Lloyd's k-means with k-means++ seeding, plus the granularity rule that
picks how many semantic centers to fit for a given corpus size.

Distances are squared Euclidean; on unit-norm rows that is monotonic in
cosine similarity, so retrieval and clustering agree on geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngState, normalize_rows
from .errors import ParameterError


@dataclass
class GranularityConfig:
    """How finely to carve the corpus into semantic centers."""

    compact_cluster_size: int = 300
    centers_per_class: int = 3

    def __post_init__(self):
        if self.compact_cluster_size < 1 or self.centers_per_class < 1:
            raise ParameterError("granularity parameters must be positive")


def estimate_k(n: int, target_k: int, cfg: GranularityConfig | None = None) -> int:
    """Center count = max(ceil(n / compact_size), target_k * centers_per_class).

    Large corpora get one center per ~compact_cluster_size images; small ones
    get centers_per_class centers per expected class. Clamped to <= n.
    """
    cfg = cfg or GranularityConfig()
    if target_k < 2:
        raise ParameterError(f"target_k must be >= 2, got {target_k}")
    if n < target_k:
        raise ParameterError(f"n={n} is smaller than target_k={target_k}")
    k = max(math.ceil(n / cfg.compact_cluster_size),
            target_k * cfg.centers_per_class)
    return min(k, n)


@dataclass
class KmeansResult:
    centers: np.ndarray            # k x D, unit-normalized copy of the centroids
    centroids: np.ndarray          # k x D raw cluster means
    assignment: np.ndarray         # int64[N] in [0, k)
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list)


def _pairwise_sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x||^2 - 2 x.c + ||c||^2, computed blockwise against all centers
    x_sq = np.einsum("ij,ij->i", x, x)
    c_sq = np.einsum("ij,ij->i", centers, centers)
    d = x_sq[:, None] - 2.0 * (x @ centers.T) + c_sq[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _kmeans_pp_init(x: np.ndarray, k: int, rng: RngState) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=x.dtype)
    first = rng.uniform_int(n)
    centers[0] = x[first]
    closest = _pairwise_sq_dists(x, centers[:1])[:, 0].astype(np.float64)
    for c in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # all points coincide with chosen centers; fall back to uniform
            idx = rng.uniform_int(n)
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centers[c] = x[idx]
        d_new = _pairwise_sq_dists(x, centers[c:c + 1])[:, 0]
        np.minimum(closest, d_new, out=closest)
    return centers


def _assign(x: np.ndarray, centroids: np.ndarray):
    """Blockwise nearest-center assignment; returns (assignment, own_dists).

    Blocking keeps the distance buffer around 128 MB however large N and k
    grow (the full N x k matrix does not fit in memory at corpus scale)."""
    n, k = x.shape[0], centroids.shape[0]
    block = max(1, (1 << 25) // max(k, 1))
    assignment = np.empty(n, dtype=np.int64)
    own = np.empty(n, dtype=np.float64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d = _pairwise_sq_dists(x[start:stop], centroids)
        idx = np.argmin(d, axis=1)
        assignment[start:stop] = idx
        own[start:stop] = d[np.arange(stop - start), idx]
    return assignment, own


def _repair_empty(x: np.ndarray, centroids: np.ndarray,
                  assignment: np.ndarray, own: np.ndarray, k: int):
    """Give each empty cluster the point currently farthest from its center."""
    counts = np.bincount(assignment, minlength=k)
    if np.all(counts > 0):
        return assignment, own
    ranking = own.copy()
    for empty in np.flatnonzero(counts == 0):
        donor = int(np.argmax(ranking))
        counts[assignment[donor]] -= 1
        assignment[donor] = empty
        counts[empty] = 1
        ranking[donor] = -np.inf  # a moved point cannot be moved again
        own[donor] = float(_pairwise_sq_dists(x[donor:donor + 1],
                                              centroids[empty:empty + 1])[0, 0])
    return assignment, own


def kmeans_fit(x: np.ndarray, k: int, rng: RngState, max_iter: int = 300,
               tol: float = 1e-6, n_init: int = 10) -> KmeansResult:
    """Best of n_init restarted Lloyd runs (lowest final inertia), each from
    a fresh k-means++ seed drawn sequentially from rng.

    The returned `centers` are the unit-normalized member sums (same direction
    as the member means), suitable as classification targets; `centroids`
    keeps the raw means.
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    n = x.shape[0]
    if k > n:
        raise ParameterError(f"k={k} exceeds row count {n}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if n_init < 1:
        raise ParameterError(f"n_init must be >= 1, got {n_init}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("input matrix contains NaN or Inf")

    best: KmeansResult | None = None
    for _ in range(n_init):
        result = _kmeans_single(x, k, rng, max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
        if best.inertia == 0.0:
            break
    return best


def _kmeans_single(x: np.ndarray, k: int, rng: RngState, max_iter: int,
                   tol: float) -> KmeansResult:
    n = x.shape[0]
    centroids = _kmeans_pp_init(x, k, rng)
    assignment = np.zeros(n, dtype=np.int64)
    prev_inertia = np.inf
    history: list[float] = []
    iterations = 0

    for it in range(1, max_iter + 1):
        iterations = it
        new_assignment, own = _assign(x, centroids)
        new_assignment, own = _repair_empty(x, centroids, new_assignment,
                                            own, k)
        inertia = float(own.sum())
        history.append(inertia)

        fixed_point = it > 1 and np.array_equal(new_assignment, assignment)
        assignment = new_assignment
        if fixed_point:
            break

        # update step: mean of member rows per cluster (repair keeps counts > 0)
        sums = np.zeros((k, x.shape[1]), dtype=np.float64)
        np.add.at(sums, assignment, x.astype(np.float64))
        counts = np.bincount(assignment, minlength=k).astype(np.float64)
        centroids = (sums / counts[:, None]).astype(np.float32)

        if inertia == 0.0:
            break
        if np.isfinite(prev_inertia) and prev_inertia > 0:
            if (prev_inertia - inertia) / prev_inertia < tol:
                break
        prev_inertia = inertia

    # centers of the returned assignment: member sums, unit-normalized
    sums = np.zeros((k, x.shape[1]), dtype=np.float64)
    np.add.at(sums, assignment, x.astype(np.float64))
    counts = np.bincount(assignment, minlength=k).astype(np.float64)
    centers = normalize_rows(sums).astype(np.float32)
    centroids = (sums / counts[:, None]).astype(np.float32)

    return KmeansResult(centers=centers, centroids=centroids,
                        assignment=assignment, inertia=float(history[-1]),
                        iterations=iterations, inertia_history=history)
