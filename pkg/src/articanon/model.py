"""Tiny per-point network with a semantic head and a canonical-offset head.

Trunk, per frame of an (S, N) sample::

    x (7) -> relu(64) -> relu(64) = h
    [h, mean of h over 16 nearest neighbours] (128) -> relu(128) = c
    [c, mean of c over the same point index in every frame] (256) -> relu(128) = f
    f -> logits (6),  f -> offsets (3)

Everything is f64 with hand-written backprop, so gradient checks are exact.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree

from .losses import OffsetField, l_canon, l_canon_grad, semantic_loss
from .sensing import SequenceSample

log = logging.getLogger(__name__)

N_CLASSES = 6
N_NEIGHBORS = 16
LAYERS = {  # name: (fan_in, fan_out)
    "enc1": (7, 64),
    "enc2": (64, 64),
    "ctx": (128, 128),
    "tmp": (256, 128),
    "sem": (128, N_CLASSES),
    "off": (128, 3),
}
HEAD_LAYERS = ("sem", "off")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup: int = 10
    patience: int = 10
    epochs: int = 200
    batch_size: int = 1
    seed: int = 42
    loss: str = "lovasz"
    canon_norm: str = "all"

    def __post_init__(self):
        for name in ("lr", "beta1", "beta2", "eps", "epochs", "batch_size", "patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0 or self.warmup < 0:
            raise ValueError("weight_decay and warmup must be non-negative")

    def to_dict(self):
        return asdict(self)


def init_params(seed: int = 42) -> dict:
    """He-normal weights, zero biases; reproducible bit-for-bit from the seed."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, (fi, fo) in LAYERS.items():
        scale = np.sqrt(2.0 / fi)
        if name in HEAD_LAYERS:
            scale *= 0.1
        params[f"{name}.W"] = rng.normal(0.0, scale, size=(fi, fo))
        params[f"{name}.b"] = np.zeros(fo)
    return params


def neighbor_matrices(xyz: np.ndarray, k: int = N_NEIGHBORS) -> list:
    """Row-stochastic sparse averaging operator per frame (k nearest, self included)."""
    out = []
    for pts in np.asarray(xyz, float):
        n = len(pts)
        kk = min(k, n)
        _, idx = cKDTree(pts).query(pts, k=kk)
        idx = np.asarray(idx).reshape(n, kk)
        rows = np.repeat(np.arange(n), kk)
        out.append(csr_matrix((np.full(n * kk, 1.0 / kk), (rows, idx.ravel())), shape=(n, n)))
    return out


@dataclass
class Prepared:
    """Inputs that do not depend on parameters: features and neighbour operators."""
    features: np.ndarray          # (S, N, 7)
    neighbors: list               # S sparse (N, N)
    labels: np.ndarray | None = None
    offsets: OffsetField | None = None
    name: str = ""

    @classmethod
    def from_sample(cls, sample: SequenceSample, offsets: OffsetField | None = None, name: str = ""):
        return cls(sample.features(), neighbor_matrices(sample.xyz),
                   np.asarray(sample.semantic), offsets, name)


def _prep(sample) -> Prepared:
    return sample if isinstance(sample, Prepared) else Prepared.from_sample(sample)


def _dense(x, params, name):
    return x @ params[f"{name}.W"] + params[f"{name}.b"]


def _forward(params, prep: Prepared):
    x = prep.features
    S = x.shape[0]
    z1 = _dense(x, params, "enc1")
    h1 = np.maximum(z1, 0.0)
    z2 = _dense(h1, params, "enc2")
    h2 = np.maximum(z2, 0.0)
    pooled = np.stack([prep.neighbors[s] @ h2[s] for s in range(S)])
    cin = np.concatenate([h2, pooled], axis=2)
    z3 = _dense(cin, params, "ctx")
    h3 = np.maximum(z3, 0.0)
    tmean = np.broadcast_to(h3.mean(axis=0, keepdims=True), h3.shape)
    tin = np.concatenate([h3, tmean], axis=2)
    z4 = _dense(tin, params, "tmp")
    f = np.maximum(z4, 0.0)
    logits = _dense(f, params, "sem")
    offsets = _dense(f, params, "off")
    cache = dict(x=x, z1=z1, h1=h1, z2=z2, h2=h2, cin=cin, z3=z3, h3=h3, tin=tin, z4=z4, f=f)
    return logits, offsets, cache


def forward(params: dict, sample) -> tuple[np.ndarray, np.ndarray]:
    """Semantic logits (S, N, 6) and canonical offsets (S, N, 3)."""
    logits, offsets, _ = _forward(params, _prep(sample))
    return logits, offsets


def _grad_dense(grads, params, name, inp, dz):
    grads[f"{name}.W"] = inp.reshape(-1, inp.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
    grads[f"{name}.b"] = dz.reshape(-1, dz.shape[-1]).sum(axis=0)
    return dz @ params[f"{name}.W"].T


def backward_from_outputs(params, prep: Prepared, cache, d_logits, d_offsets) -> dict:
    """Parameter gradients given upstream gradients on both heads."""
    S = prep.features.shape[0]
    g: dict = {}
    df = _grad_dense(g, params, "sem", cache["f"], d_logits)
    df = df + _grad_dense(g, params, "off", cache["f"], d_offsets)
    dz4 = df * (cache["z4"] > 0)
    dtin = _grad_dense(g, params, "tmp", cache["tin"], dz4)
    dh3 = dtin[..., :128] + dtin[..., 128:].sum(axis=0, keepdims=True) / S
    dz3 = dh3 * (cache["z3"] > 0)
    dcin = _grad_dense(g, params, "ctx", cache["cin"], dz3)
    dpooled = dcin[..., 64:]
    dh2 = dcin[..., :64] + np.stack([prep.neighbors[s].T @ dpooled[s] for s in range(S)])
    dz2 = dh2 * (cache["z2"] > 0)
    dh1 = _grad_dense(g, params, "enc2", cache["h1"], dz2)
    dz1 = dh1 * (cache["z1"] > 0)
    _grad_dense(g, params, "enc1", cache["x"], dz1)
    return g


def loss_and_grad(params, prep: Prepared, loss_kind="lovasz", canon_norm="all"):
    """Composite loss l_sem + l_canon, its two parts, and the parameter gradients."""
    logits, offsets, cache = _forward(params, prep)
    l_sem, d_flat = semantic_loss(logits, prep.labels, loss_kind)
    fld = prep.offsets.with_prediction(offsets)
    l_can = l_canon(fld, canon_norm)
    total = l_sem + l_can
    if not np.isfinite(total):
        raise TrainingDiverged(f"non-finite loss (l_sem={l_sem}, l_canon={l_can})")
    d_off = l_canon_grad(fld, canon_norm)
    grads = backward_from_outputs(params, prep, cache, d_flat.reshape(logits.shape), d_off)
    return total, (l_sem, l_can), grads


def backward(params, sample, labels, offsets: OffsetField, loss_kind="lovasz", canon_norm="all") -> dict:
    prep = _prep(sample)
    prep = Prepared(prep.features, prep.neighbors, np.asarray(labels), offsets, prep.name)
    return loss_and_grad(params, prep, loss_kind, canon_norm)[2]


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    lr_scale: float = 1.0
    best: float = float("inf")
    stale: int = 0


def learning_rate(config: TrainConfig, state: OptimizerState, epoch: int) -> float:
    """Linear warmup lr*(epoch+1)/warmup over the first epochs, then plateau-scaled lr."""
    warm = min(1.0, (epoch + 1) / config.warmup) if config.warmup else 1.0
    return config.lr * warm * state.lr_scale


def adamw_step(params: dict, grads: dict, state: OptimizerState, config: TrainConfig, epoch: int) -> dict:
    """One AdamW update with decoupled weight decay; returns new parameter dict."""
    lr = learning_rate(config, state, epoch)
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = {}
    for k, p in params.items():
        g = grads[k]
        m = state.m.get(k, np.zeros_like(p)) * b1 + (1.0 - b1) * g
        v = state.v.get(k, np.zeros_like(p)) * b2 + (1.0 - b2) * g * g
        state.m[k], state.v[k] = m, v
        out[k] = p * (1.0 - lr * config.weight_decay) - lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return out


def plateau_update(state: OptimizerState, loss: float, epoch: int, config: TrainConfig) -> None:
    """Halve the learning rate after ``patience`` post-warmup epochs without improvement."""
    if epoch < config.warmup:
        return
    if loss < state.best:
        state.best = loss
        state.stale = 0
        return
    state.stale += 1
    if state.stale >= config.patience:
        state.lr_scale *= 0.5
        state.stale = 0


def train(samples: list, config: TrainConfig, params: dict | None = None, progress=None):
    """Train on prepared samples (each with labels and offset targets).

    Samples are sorted by name so results do not depend on input order; each
    epoch visits them in a seeded shuffled order. Returns (params, history)
    where history holds one dict per epoch: epoch, l_sem, l_canon, lr.
    """
    if not samples:
        raise ValueError("training set is empty")
    samples = sorted(samples, key=lambda p: p.name)
    params = init_params(config.seed) if params is None else dict(params)
    rng = np.random.default_rng(config.seed)
    state = OptimizerState()
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        lr = learning_rate(config, state, epoch)
        sem_sum = can_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = None
            for i in batch:
                try:
                    _, (ls, lc), g = loss_and_grad(params, samples[i], config.loss, config.canon_norm)
                except TrainingDiverged as exc:
                    raise TrainingDiverged(f"epoch {epoch + 1}: {exc}") from None
                sem_sum += ls
                can_sum += lc
                acc = g if acc is None else {k: acc[k] + g[k] for k in acc}
            grads = {k: v / len(batch) for k, v in acc.items()}
            params = adamw_step(params, grads, state, config, epoch)
        row = {"epoch": epoch + 1, "l_sem": sem_sum / len(samples),
               "l_canon": can_sum / len(samples), "lr": lr}
        history.append(row)
        plateau_update(state, row["l_sem"] + row["l_canon"], epoch, config)
        if progress:
            progress(row)
        log.debug("epoch %d l_sem %.5f l_canon %.5f lr %.2e", *row.values())
    return params, history


def loss_curve_csv(history: list) -> str:
    lines = ["epoch,l_sem,l_canon,lr"]
    lines += [f"{r['epoch']},{r['l_sem']:.10g},{r['l_canon']:.10g},{r['lr']:.10g}" for r in history]
    return "\n".join(lines) + "\n"


def predict(params, sample) -> tuple[np.ndarray, np.ndarray]:
    """Predicted classes (S, N) and offsets (S, N, 3)."""
    logits, offsets = forward(params, sample)
    return np.argmax(logits, axis=-1), offsets
