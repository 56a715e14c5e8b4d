"""Cross-modal mutual distillation: two small cluster heads (one per
modality) trained so that each modality's assignment-matrix columns align
with the other modality's neighbor-view columns, regularized toward
confident and balanced assignments.

Heads are two-layer MLPs (input -> hidden -> K) with softmax outputs.
Gradients are computed analytically; parameters are stored float32 and all
computation runs in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import (RngState, STREAM_NEIGHBOR_SAMPLE, STREAM_SHUFFLE,
                   STREAM_WEIGHT_INIT, normalize_rows)
from .errors import DimensionError, ParameterError, TrainingDiverged
from .neighbors import NeighborGraph, sample_neighbors
from .textspace import TextCounterparts

_NORM_EPS = 1e-12   # added to assignment-column norms; early batches can starve a cluster
_LOG_FLOOR = 1e-300


@dataclass
class ClusterHeadParams:
    w1: np.ndarray  # D x H
    b1: np.ndarray  # H
    w2: np.ndarray  # H x K
    b2: np.ndarray  # K

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def copy(self) -> "ClusterHeadParams":
        return ClusterHeadParams(self.w1.copy(), self.b1.copy(),
                                 self.w2.copy(), self.b2.copy())

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_head(d_in: int, hidden: int, k: int, rng: RngState,
              dtype=np.float32) -> ClusterHeadParams:
    """Symmetric uniform init, a = sqrt(6/(fan_in+fan_out)); zero biases."""
    a1 = np.sqrt(6.0 / (d_in + hidden))
    a2 = np.sqrt(6.0 / (hidden + k))
    return ClusterHeadParams(
        w1=rng.uniform(-a1, a1, (d_in, hidden)).astype(dtype),
        b1=np.zeros(hidden, dtype=dtype),
        w2=rng.uniform(-a2, a2, (hidden, k)).astype(dtype),
        b2=np.zeros(k, dtype=dtype),
    )


def _activate(h, kind: str):
    if kind == "relu":
        return np.maximum(h, 0.0)
    if kind == "tanh":
        return np.tanh(h)
    raise ParameterError(f"unknown activation {kind!r}")


def _activate_grad(h, a, kind: str):
    if kind == "relu":
        return (h > 0.0).astype(h.dtype)
    return 1.0 - a * a  # tanh


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(params: ClusterHeadParams, x: np.ndarray,
                    activation: str):
    w1 = params.w1.astype(np.float64)
    b1 = params.b1.astype(np.float64)
    w2 = params.w2.astype(np.float64)
    b2 = params.b2.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != w1.shape[0]:
        raise DimensionError(f"input dim {x.shape[1]} != head dim {w1.shape[0]}")
    h1 = x @ w1 + b1
    a1 = _activate(h1, activation)
    z = a1 @ w2 + b2
    p = _softmax_rows(z)
    return x, h1, a1, p


def head_forward(params: ClusterHeadParams, x: np.ndarray,
                 activation: str = "relu") -> np.ndarray:
    """Row-stochastic soft cluster assignments for a batch."""
    return _forward_cached(params, x, activation)[3]


def _backward_head(params: ClusterHeadParams, cache, dp: np.ndarray,
                   activation: str) -> dict[str, np.ndarray]:
    """Gradients of a head's parameters given dLoss/dP for one branch."""
    x, h1, a1, p = cache
    # softmax backward: dz_ij = p_ij (dp_ij - sum_k dp_ik p_ik)
    inner = (dp * p).sum(axis=1, keepdims=True)
    dz = p * (dp - inner)
    w2 = params.w2.astype(np.float64)
    dw2 = a1.T @ dz
    db2 = dz.sum(axis=0)
    da1 = dz @ w2.T
    dh1 = da1 * _activate_grad(h1, a1, activation)
    dw1 = x.T @ dh1
    db1 = dh1.sum(axis=0)
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


@dataclass
class AssignmentBatch:
    """The four row-stochastic assignment matrices of one step: images,
    image neighbors, counterparts, counterpart neighbors."""

    p: np.ndarray
    p_n: np.ndarray
    q: np.ndarray
    q_n: np.ndarray

    def __post_init__(self):
        shapes = {m.shape for m in (self.p, self.p_n, self.q, self.q_n)}
        if len(shapes) != 1:
            raise DimensionError(f"assignment matrices disagree on shape: {shapes}")
        for m in (self.p, self.p_n, self.q, self.q_n):
            if np.any(np.asarray(m) < 0) or \
                    np.abs(np.asarray(m).sum(axis=1) - 1.0).max() > 1e-5:
                raise DimensionError("assignment rows must be stochastic")


@dataclass
class DistillConfig:
    tau_hat: float = 0.5
    alpha: float = 5.0
    n_neighbors: int = 50
    batch_size: int = 512
    epochs: int = 20
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    hidden: int | None = None      # None: hidden width follows the input dim
    activation: str = "relu"
    use_dis: bool = True
    use_con: bool = True
    use_bal: bool = True

    def __post_init__(self):
        if self.tau_hat <= 0:
            raise ParameterError(f"tau_hat must be positive, got {self.tau_hat}")
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.batch_size < 2:
            raise ParameterError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.lr < 0:
            raise ParameterError(f"lr must be >= 0, got {self.lr}")


@dataclass
class LossBreakdown:
    dis: float
    con: float
    bal: float
    total: float

    CSV_FIELDS = ("step", "dis", "con", "bal", "total")


def _normalize_columns(m: np.ndarray):
    norms = np.sqrt((m * m).sum(axis=0))
    return m / (norms + _NORM_EPS), norms


def _dis_half(a: np.ndarray, b: np.ndarray, tau_hat: float):
    """One direction of the distillation loss: columns of `a` classify the
    matching columns of `b` against all of b's columns.

    Returns (loss, dL/da, dL/db).
    """
    k = a.shape[1]
    a_hat, a_norms = _normalize_columns(a)
    b_hat, b_norms = _normalize_columns(b)
    c = a_hat.T @ b_hat                       # K x K column cosines
    logits = c / tau_hat
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    sm = e / e.sum(axis=1, keepdims=True)
    loss = float(-np.log(np.maximum(sm.diagonal(), _LOG_FLOOR)).sum())

    g = (sm - np.eye(k)) / tau_hat            # dLoss/dC
    da_hat = b_hat @ g.T
    db_hat = a_hat @ g
    da = _normalize_columns_backward(a, a_norms, da_hat)
    db = _normalize_columns_backward(b, b_norms, db_hat)
    return loss, da, db


def _normalize_columns_backward(m: np.ndarray, norms: np.ndarray,
                                d_hat: np.ndarray) -> np.ndarray:
    # forward was m / (norms + eps); undo per column. An all-zero column has
    # zero second-term contribution; clamping the denominator avoids 0 * inf.
    r = norms + _NORM_EPS
    inner = (d_hat * m).sum(axis=0)
    denom = np.maximum(norms * r * r, _LOG_FLOOR)
    return d_hat / r - m * (inner / denom)


def loss_dis(batch: AssignmentBatch, tau_hat: float) -> float:
    """Cross-modal column-contrastive distillation term (both directions)."""
    if tau_hat <= 0:
        raise ParameterError(f"tau_hat must be positive, got {tau_hat}")
    l1, _, _ = _dis_half(np.asarray(batch.q, dtype=np.float64),
                         np.asarray(batch.p_n, dtype=np.float64), tau_hat)
    l2, _, _ = _dis_half(np.asarray(batch.p, dtype=np.float64),
                         np.asarray(batch.q_n, dtype=np.float64), tau_hat)
    return l1 + l2


def loss_con(p: np.ndarray, q: np.ndarray) -> float:
    """-log of the summed per-row agreement; minimized by matching one-hots."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {q.shape}")
    s = float((p * q).sum())
    return -float(np.log(max(s, _LOG_FLOOR)))


def loss_bal(p: np.ndarray, q: np.ndarray) -> float:
    """Entropy of the mean assignment in each modality; large when balanced."""
    def entropy_of_mean(m):
        mbar = np.asarray(m, dtype=np.float64).mean(axis=0)
        nz = mbar[mbar > 0.0]
        return float(-(nz * np.log(nz)).sum())
    return entropy_of_mean(p) + entropy_of_mean(q)


def loss_total(batch: AssignmentBatch, cfg: DistillConfig) -> LossBreakdown:
    dis = loss_dis(batch, cfg.tau_hat) if cfg.use_dis else 0.0
    con = loss_con(batch.p, batch.q) if cfg.use_con else 0.0
    bal = loss_bal(batch.p, batch.q) if cfg.use_bal else 0.0
    return LossBreakdown(dis=dis, con=con, bal=bal,
                         total=dis + con - cfg.alpha * bal)


def grads(params_f: ClusterHeadParams, params_g: ClusterHeadParams,
          inputs: tuple[np.ndarray, np.ndarray],
          neighbor_inputs: tuple[np.ndarray, np.ndarray],
          cfg: DistillConfig):
    """Analytic gradients of the full objective for both heads.

    inputs = (image batch, counterpart batch); neighbor_inputs likewise for
    the sampled neighbors. Neighbor branches share head parameters, so their
    gradients accumulate onto the same tensors. Returns
    (grads_f, grads_g, LossBreakdown) with grads as name->array dicts.
    """
    v, t = inputs
    v_n, t_n = neighbor_inputs
    n = v.shape[0]
    if not (t.shape[0] == v_n.shape[0] == t_n.shape[0] == n):
        raise DimensionError("batch and neighbor batch row counts disagree")

    cache_p = _forward_cached(params_f, v, cfg.activation)
    cache_pn = _forward_cached(params_f, v_n, cfg.activation)
    cache_q = _forward_cached(params_g, t, cfg.activation)
    cache_qn = _forward_cached(params_g, t_n, cfg.activation)
    p, p_n, q, q_n = cache_p[3], cache_pn[3], cache_q[3], cache_qn[3]

    k = p.shape[1]
    dp = np.zeros_like(p)
    dp_n = np.zeros_like(p_n)
    dq = np.zeros_like(q)
    dq_n = np.zeros_like(q_n)

    dis = 0.0
    if cfg.use_dis:
        l1, da, db = _dis_half(q, p_n, cfg.tau_hat)
        dq += da
        dp_n += db
        l2, da, db = _dis_half(p, q_n, cfg.tau_hat)
        dp += da
        dq_n += db
        dis = l1 + l2

    con = 0.0
    if cfg.use_con:
        s = float((p * q).sum())
        s_eff = max(s, _LOG_FLOOR)
        con = -float(np.log(s_eff))
        dp += -q / s_eff
        dq += -p / s_eff

    bal = 0.0
    if cfg.use_bal:
        pbar = p.mean(axis=0)
        qbar = q.mean(axis=0)
        bal = loss_bal(p, q)
        # objective includes -alpha * bal
        dp += cfg.alpha * (np.log(np.maximum(pbar, _LOG_FLOOR)) + 1.0) / n
        dq += cfg.alpha * (np.log(np.maximum(qbar, _LOG_FLOOR)) + 1.0) / n

    gf = _backward_head(params_f, cache_p, dp, cfg.activation)
    gf_n = _backward_head(params_f, cache_pn, dp_n, cfg.activation)
    gg = _backward_head(params_g, cache_q, dq, cfg.activation)
    gg_n = _backward_head(params_g, cache_qn, dq_n, cfg.activation)
    for name in gf:
        gf[name] += gf_n[name]
        gg[name] += gg_n[name]

    breakdown = LossBreakdown(dis=dis, con=con, bal=bal,
                              total=dis + con - cfg.alpha * bal)
    return gf, gg, breakdown


class AdamState:
    """Per-head first/second moment buffers, kept in float64."""

    def __init__(self, params: ClusterHeadParams):
        self.m = {k: np.zeros(v.shape, dtype=np.float64)
                  for k, v in params.tensors().items()}
        self.v = {k: np.zeros(v.shape, dtype=np.float64)
                  for k, v in params.tensors().items()}
        self.t = 0

    def step(self, params: ClusterHeadParams, g: dict[str, np.ndarray],
             cfg: DistillConfig) -> None:
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, tensor in params.tensors().items():
            grad = g[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * grad
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * grad * grad
            m_hat = self.m[name] / corr1
            v_hat = self.v[name] / corr2
            update = cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            new = tensor.astype(np.float64) - update
            tensor[...] = new.astype(tensor.dtype)


def train(images: np.ndarray, counterparts: TextCounterparts,
          graphs: tuple[NeighborGraph, NeighborGraph], k: int,
          cfg: DistillConfig):
    """Minibatch mutual-distillation loop.

    graphs = (image-modality graph, counterpart-modality graph), both built
    beforehand on the matching matrices. Returns (params_f, params_g,
    per-step LossBreakdown history).
    """
    v = normalize_rows(np.asarray(images, dtype=np.float32))
    t = np.asarray(counterparts.matrix, dtype=np.float32)
    if v.shape[0] != t.shape[0]:
        raise DimensionError(
            f"image rows {v.shape[0]} != counterpart rows {t.shape[0]}")
    g_img, g_txt = graphs
    if g_img.n != v.shape[0] or g_txt.n != v.shape[0]:
        raise DimensionError("neighbor graphs were not built on these matrices")

    n = v.shape[0]
    init_rng = RngState(cfg.seed, STREAM_WEIGHT_INIT)
    hidden_f = cfg.hidden or v.shape[1]
    hidden_g = cfg.hidden or t.shape[1]
    params_f = init_head(v.shape[1], hidden_f, k, init_rng)
    params_g = init_head(t.shape[1], hidden_g, k, init_rng)

    shuffle_rng = RngState(cfg.seed, STREAM_SHUFFLE)
    nbr_rng = RngState(cfg.seed, STREAM_NEIGHBOR_SAMPLE)
    adam_f = AdamState(params_f)
    adam_g = AdamState(params_g)

    history: list[LossBreakdown] = []
    step = 0
    for _epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if idx.size < 2:
                continue  # a single-row tail batch has no usable statistics
            vn_idx = sample_neighbors(g_img, idx, nbr_rng)
            tn_idx = sample_neighbors(g_txt, idx, nbr_rng)
            gf, gg, breakdown = grads(params_f, params_g,
                                      (v[idx], t[idx]),
                                      (v[vn_idx], t[tn_idx]), cfg)
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(step)
            adam_f.step(params_f, gf, cfg)
            adam_g.step(params_g, gg, cfg)
            history.append(breakdown)
            step += 1
    return params_f, params_g, history


def predict(params_f: ClusterHeadParams, images: np.ndarray,
            activation: str = "relu") -> np.ndarray:
    """Hard assignments from the image head; ties go to the lowest id."""
    p = head_forward(params_f, np.asarray(images, dtype=np.float32), activation)
    return np.argmax(p, axis=1).astype(np.int64)


_CKPT_HEADER = struct.Struct("<IIIQ")


def save_checkpoint(path: str, params_f: ClusterHeadParams,
                    params_g: ClusterHeadParams, step: int = 0) -> None:
    """Header (D, H, K, step) then both heads' tensors in declaration order
    (f then g: w1, b1, w2, b2), little-endian float32."""
    d, h, k = params_f.shape
    with open(path, "wb") as f:
        f.write(_CKPT_HEADER.pack(d, h, k, step))
        for params in (params_f, params_g):
            for tensor in params.tensors().values():
                f.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path: str):
    with open(path, "rb") as fh:
        header = fh.read(_CKPT_HEADER.size)
        if len(header) < _CKPT_HEADER.size:
            raise DimensionError(f"{path}: truncated checkpoint header")
        d, h, k, step = _CKPT_HEADER.unpack(header)
        raw = fh.read()
    sizes = [("w1", (d, h)), ("b1", (h,)), ("w2", (h, k)), ("b2", (k,))]
    per_head = sum(int(np.prod(s)) for _, s in sizes)
    if len(raw) != per_head * 2 * 4:
        raise DimensionError(f"{path}: checkpoint payload size mismatch")
    flat = np.frombuffer(raw, dtype="<f4")
    heads = []
    offset = 0
    for _ in range(2):
        tensors = {}
        for name, shape in sizes:
            count = int(np.prod(shape))
            tensors[name] = flat[offset:offset + count].reshape(shape).copy()
            offset += count
        heads.append(ClusterHeadParams(**tensors))
    return heads[0], heads[1], step
