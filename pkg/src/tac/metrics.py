"""External clustering metrics: NMI, accuracy under the best one-to-one
cluster-to-class mapping, and the adjusted Rand index.

Labels may be any non-negative integers; they are reindexed internally, so
neither argument needs contiguous ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError


def _contingency(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise DimensionError(
            f"label vectors must be 1-D and equal length, got {pred.shape} vs {truth.shape}")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    kp = pi.max() + 1
    kt = ti.max() + 1
    table = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    # natural-log entropy of a count vector; 0 log 0 := 0
    p = counts[counts > 0].astype(np.float64)
    p = p / p.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth, average: str = "arithmetic") -> float:
    """Mutual information normalized by the mean of the two entropies.

    average: "arithmetic" (default) or "geometric", for cross-convention
    comparisons.
    """
    table = _contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1))
    h_truth = _entropy(table.sum(axis=0))
    if h_pred == 0.0 and h_truth == 0.0:
        return 1.0  # both partitions trivial, hence identical up to relabeling
    nz = table[table > 0].astype(np.float64)
    pij = nz / n
    pi = table.sum(axis=1).astype(np.float64) / n
    pj = table.sum(axis=0).astype(np.float64) / n
    outer = np.outer(pi, pj)[table > 0]
    mi = float((pij * np.log(pij / outer)).sum())
    mi = max(mi, 0.0)
    if average == "arithmetic":
        denom = 0.5 * (h_pred + h_truth)
    elif average == "geometric":
        denom = float(np.sqrt(h_pred * h_truth))
    else:
        raise ValueError(f"unknown average {average!r}")
    if denom == 0.0:
        return 0.0
    return min(mi / denom, 1.0)


def acc(pred, truth) -> float:
    """Fraction matched under the best one-to-one cluster-to-class mapping.

    Solved exactly with the Hungarian algorithm on the negated contingency
    table, zero-padded to square when cluster counts differ.
    """
    table = _contingency(pred, truth)
    kp, kt = table.shape
    size = max(kp, kt)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[:kp, :kt] = table
    rows, cols = linear_sum_assignment(-padded)
    matched = padded[rows, cols].sum()
    return float(matched) / float(table.sum())


def ari(pred, truth) -> float:
    """(RI - E[RI]) / (max RI - E[RI]) from pair counting."""
    table = _contingency(pred, truth)
    n = int(table.sum())
    if n < 2:
        raise DimensionError("ari needs at least 2 samples")

    def comb2(v):
        v = v.astype(np.float64)
        return v * (v - 1.0) / 2.0

    sum_ij = comb2(table.ravel()).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    pairs = n * (n - 1) / 2.0
    expected = sum_a * sum_b / pairs
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0  # both partitions trivial in the same way
    return float((sum_ij - expected) / (maximum - expected))


@dataclass
class MetricsReport:
    """One evaluated run; the unit of persisted experimental output."""

    nmi: float
    acc: float
    ari: float
    n: int
    k_pred: int
    k_true: int
    seed: int = 0
    config_hash: str = ""
    timestamp: str = ""
    extra: dict = field(default_factory=dict)

    # field order is the on-disk contract for both text and CSV forms
    FIELDS = ("nmi", "acc", "ari", "n", "k_pred", "k_true",
              "seed", "config_hash", "timestamp")

    def to_text(self) -> str:
        lines = [f"{name}: {getattr(self, name)}" for name in self.FIELDS]
        for key in sorted(self.extra):
            lines.append(f"{key}: {self.extra[key]}")
        return "\n".join(lines) + "\n"

    def csv_header(self) -> str:
        return ",".join(self.FIELDS + tuple(sorted(self.extra)))

    def to_csv_row(self) -> str:
        vals = [f"{getattr(self, name):.6f}" if name in ("nmi", "acc", "ari")
                else str(getattr(self, name)) for name in self.FIELDS]
        vals += [str(self.extra[k]) for k in sorted(self.extra)]
        return ",".join(vals)


def evaluate(pred, truth, seed: int = 0, config_hash: str = "",
             timestamp: str = "") -> MetricsReport:
    """All three metrics plus run metadata in one report."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    return MetricsReport(
        nmi=nmi(pred, truth),
        acc=acc(pred, truth),
        ari=ari(pred, truth),
        n=int(len(pred)),
        k_pred=int(len(np.unique(pred))),
        k_true=int(len(np.unique(truth))),
        seed=seed,
        config_hash=config_hash,
        timestamp=timestamp,
    )
