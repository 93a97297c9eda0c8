"""Training objectives with analytic gradients.

Offsets are regressed with an L1 term plus a cosine term on things points;
semantics use the Lovász-Softmax surrogate of per-class IoU (or plain
cross-entropy for the ablation switch).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

NORM_EPS = 1e-8
N_CLASSES = 6


@dataclass
class OffsetField:
    predicted: Optional[np.ndarray]
    target: np.ndarray
    mask: np.ndarray

    def with_prediction(self, predicted: np.ndarray) -> "OffsetField":
        return OffsetField(np.asarray(predicted, dtype=float), self.target, self.mask)


def l_dist(pred, target):
    """L1 distance over the last axis."""
    return np.abs(np.asarray(pred, float) - np.asarray(target, float)).sum(axis=-1)


def l_dist_grad(pred, target):
    return np.sign(np.asarray(pred, float) - np.asarray(target, float))


def _angle_terms(pred, target):
    pred = np.asarray(pred, float)
    target = np.asarray(target, float)
    np_ = np.linalg.norm(pred, axis=-1)
    nt = np.linalg.norm(target, axis=-1)
    ok = (np_ >= NORM_EPS) & (nt >= NORM_EPS)
    safe_p = np.where(ok, np_, 1.0)
    safe_t = np.where(ok, nt, 1.0)
    dot = (pred * target).sum(axis=-1)
    return pred, target, safe_p, safe_t, dot, ok


def l_angle(pred, target):
    """1 - cos(angle between pred and target); 0 when either vector is (near) zero."""
    _, _, np_, nt, dot, ok = _angle_terms(pred, target)
    return np.where(ok, 1.0 - dot / (np_ * nt), 0.0)


def l_angle_grad(pred, target):
    pred, target, np_, nt, dot, ok = _angle_terms(pred, target)
    np_ = np_[..., None]
    nt = nt[..., None]
    g = -(target / (np_ * nt) - dot[..., None] * pred / (np_ ** 3 * nt))
    return np.where(ok[..., None], g, 0.0)


def _canon_norm(field: OffsetField, normalize: str) -> float:
    if normalize == "all":
        return float(field.mask.size)
    if normalize == "mask":
        return float(max(int(field.mask.sum()), 1))
    raise ValueError(f"unknown normalization {normalize!r}")


def l_canon(field: OffsetField, normalize: str = "all") -> float:
    """Masked mean of distance + angle terms.

    ``normalize="all"`` divides by S*N (every point, masked or not);
    ``"mask"`` divides by the number of things points instead.
    """
    if field.predicted is None:
        raise ValueError("offset field has no prediction")
    per_point = l_dist(field.predicted, field.target) + l_angle(field.predicted, field.target)
    return float(np.where(field.mask, per_point, 0.0).sum() / _canon_norm(field, normalize))


def l_canon_grad(field: OffsetField, normalize: str = "all") -> np.ndarray:
    g = l_dist_grad(field.predicted, field.target) + l_angle_grad(field.predicted, field.target)
    return np.where(field.mask[..., None], g, 0.0) / _canon_norm(field, normalize)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    return probs * (grad_probs - (grad_probs * probs).sum(axis=-1, keepdims=True))


def lovasz_grad(fg_sorted: np.ndarray) -> np.ndarray:
    """Gradient of the Lovász extension of the Jaccard loss w.r.t. sorted errors."""
    gts = fg_sorted.sum()
    intersection = gts - np.cumsum(fg_sorted)
    union = gts + np.cumsum(1.0 - fg_sorted)
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def _lovasz_classes(labels, n_classes, classes):
    if classes == "present":
        return [c for c in range(n_classes) if np.any(labels == c)]
    if classes == "all":
        return list(range(n_classes))
    return list(classes)


def _lovasz(probs, labels, classes, want_grad):
    probs = np.asarray(probs, float).reshape(-1, np.shape(probs)[-1])
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise ValueError("lovasz_softmax on empty input")
    cls = _lovasz_classes(labels, probs.shape[1], classes)
    if not cls:
        raise ValueError("no class present in labels")
    loss = 0.0
    grad = np.zeros_like(probs) if want_grad else None
    for c in cls:
        fg = (labels == c).astype(float)
        pc = probs[:, c]
        errors = np.abs(fg - pc)
        # Stable sort on -errors: descending, ties by point index.
        perm = np.argsort(-errors, kind="stable")
        g = lovasz_grad(fg[perm])
        loss += float(np.dot(errors[perm], g))
        if want_grad:
            d = np.empty_like(g)
            d[perm] = g
            grad[:, c] += d * np.where(fg > 0, -1.0, 1.0)
    loss /= len(cls)
    if want_grad:
        grad /= len(cls)
    return loss, grad


def lovasz_softmax(probs, labels, classes="present") -> float:
    """Lovász-Softmax loss averaged over classes present in ``labels``."""
    return _lovasz(probs, labels, classes, False)[0]


def lovasz_softmax_grad(probs, labels, classes="present") -> np.ndarray:
    """Gradient w.r.t. ``probs`` (same shape, flattened to (P, k))."""
    return _lovasz(probs, labels, classes, True)[1]


def cross_entropy(logits, labels) -> float:
    logits = np.asarray(logits, float).reshape(-1, np.shape(logits)[-1])
    labels = np.asarray(labels).reshape(-1)
    z = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(labels)), labels]))


def cross_entropy_grad(logits, labels) -> np.ndarray:
    logits = np.asarray(logits, float).reshape(-1, np.shape(logits)[-1])
    labels = np.asarray(labels).reshape(-1)
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


def semantic_loss(logits, labels, kind: str = "lovasz"):
    """Semantic loss and its gradient w.r.t. logits (flattened to (P, k))."""
    flat = np.asarray(logits, float).reshape(-1, np.shape(logits)[-1])
    if kind == "ce":
        return cross_entropy(flat, labels), cross_entropy_grad(flat, labels)
    if kind != "lovasz":
        raise ValueError(f"unknown semantic loss {kind!r}")
    probs = softmax(flat)
    loss, gp = _lovasz(probs, labels, "present", True)
    return loss, softmax_backward(probs, gp)


def total_loss(sem: float, canon: float) -> float:
    return sem + canon
