"""Discriminative text-space construction: classify vocabulary nouns onto
image semantic centers, keep the most confident nouns per center, and build
a per-image text counterpart by soft retrieval over the kept nouns.

Also hosts the zero-shot classification utility used when class-name
embeddings are available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngState, normalize_rows, softmax_temp
from .errors import DimensionError, ParameterError, SelectionError
from .kmeans import kmeans_fit
from .store import NounVocabulary, concat_features


def classify_nouns(nouns: NounVocabulary, centers: np.ndarray,
                   tau: float | None = None) -> np.ndarray:
    """Per-noun probabilities over the k semantic centers.

    Row i is the softmax over centers of cos(noun_i, center_l). The plain
    (untempered) softmax is the default; tau, when given, divides the
    similarities first.
    """
    emb = normalize_rows(nouns.embeddings)
    centers = normalize_rows(np.asarray(centers, dtype=np.float32))
    if emb.shape[1] != centers.shape[1]:
        raise DimensionError(
            f"noun dim {emb.shape[1]} != center dim {centers.shape[1]}")
    sims = (emb @ centers.T).astype(np.float64)
    return softmax_temp(sims, tau if tau is not None else 1.0)


@dataclass
class NounSelection:
    """Indices of the kept nouns with per-center provenance."""

    selected_indices: np.ndarray             # unique, sorted, into the vocabulary
    per_center: list[tuple[int, np.ndarray, np.ndarray]]  # (center, indices, confidences)
    gamma: int

    def __len__(self) -> int:
        return len(self.selected_indices)


def select_nouns(probs: np.ndarray, gamma: int) -> NounSelection:
    """Keep, for every center, the top-gamma most confident nouns among the
    nouns whose argmax center it is.

    A noun is only eligible for its argmax center, so no noun represents two
    centers. Confidence ties at the gamma-th rank are all kept, which makes
    the result independent of input ordering. Centers whose pool is empty
    contribute nothing; zero nouns overall raises SelectionError.
    """
    if gamma < 1:
        raise ParameterError(f"gamma must be >= 1, got {gamma}")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise SelectionError("noun classification produced no rows")
    k = probs.shape[1]
    owners = np.argmax(probs, axis=1)
    per_center: list[tuple[int, np.ndarray, np.ndarray]] = []
    kept: list[np.ndarray] = []
    for center in range(k):
        pool = np.flatnonzero(owners == center)
        if pool.size == 0:
            continue
        conf = probs[pool, center]
        if pool.size <= gamma:
            threshold = conf.min()
        else:
            threshold = np.sort(conf)[::-1][gamma - 1]
        keep = pool[conf >= threshold]
        keep_conf = probs[keep, center]
        order = np.argsort(-keep_conf, kind="stable")
        per_center.append((center, keep[order], keep_conf[order]))
        kept.append(keep)
    if not kept:
        raise SelectionError("no center attracted any noun")
    selected = np.unique(np.concatenate(kept))
    return NounSelection(selected_indices=selected, per_center=per_center,
                         gamma=gamma)


@dataclass
class TextCounterparts:
    """Per-image soft retrieval over the selected nouns, unit-normalized."""

    matrix: np.ndarray
    retrieval_tau: float


def build_counterparts(images: np.ndarray, nouns: NounVocabulary,
                       sel: NounSelection, tau: float = 0.005) -> TextCounterparts:
    """Each image's counterpart is the softmax-weighted (temperature tau)
    combination of the selected noun embeddings, renormalized to unit length.
    """
    if tau <= 0:
        raise ParameterError(f"retrieval temperature must be positive, got {tau}")
    if len(sel) == 0:
        raise SelectionError("empty noun selection")
    images = normalize_rows(np.asarray(images, dtype=np.float32))
    chosen = normalize_rows(nouns.embeddings[sel.selected_indices].astype(np.float32))
    if images.shape[1] != chosen.shape[1]:
        raise DimensionError(
            f"image dim {images.shape[1]} != noun dim {chosen.shape[1]}")
    sims = (images @ chosen.T).astype(np.float64)
    weights = softmax_temp(sims, tau)
    counterparts = weights @ chosen.astype(np.float64)
    counterparts = normalize_rows(counterparts).astype(np.float32)
    return TextCounterparts(matrix=counterparts, retrieval_tau=tau)


def cluster_no_train(images: np.ndarray, counterparts: TextCounterparts,
                     k: int, rng: RngState, max_iter: int = 300,
                     tol: float = 1e-6, n_init: int = 10,
                     renormalize: bool = True) -> np.ndarray:
    """Training-free route: k-means at the target cluster count on the
    concatenated [counterpart || image] rows."""
    features = concat_features(counterparts.matrix, images, renormalize=renormalize)
    result = kmeans_fit(features, k, rng, max_iter=max_iter, tol=tol,
                        n_init=n_init)
    return result.assignment


@dataclass
class ZeroShotConfig:
    clip_tau: float = 0.01
    prompt_template: str = "A photo of [CLASS]"

    def __post_init__(self):
        if self.clip_tau <= 0:
            raise ParameterError(f"clip_tau must be positive, got {self.clip_tau}")


def zero_shot_classify(images: np.ndarray, class_texts: np.ndarray,
                       cfg: ZeroShotConfig | None = None) -> np.ndarray:
    """Per-image probabilities over the class-name embeddings at the
    backbone's softmax temperature."""
    cfg = cfg or ZeroShotConfig()
    images = normalize_rows(np.asarray(images, dtype=np.float32))
    class_texts = normalize_rows(np.asarray(class_texts, dtype=np.float32))
    if images.shape[1] != class_texts.shape[1]:
        raise DimensionError(
            f"image dim {images.shape[1]} != class dim {class_texts.shape[1]}")
    sims = (images @ class_texts.T).astype(np.float64)
    return softmax_temp(sims, cfg.clip_tau)


def selection_report(sel: NounSelection, nouns: NounVocabulary) -> str:
    """Human-readable per-center listing: center id, noun, confidence."""
    lines = ["center\tnoun\tconfidence"]
    for center, indices, confs in sel.per_center:
        for idx, c in zip(indices, confs):
            lines.append(f"{center}\t{nouns.nouns[int(idx)]}\t{c:.6f}")
    return "\n".join(lines) + "\n"
