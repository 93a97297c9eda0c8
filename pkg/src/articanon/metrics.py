"""4D panoptic segmentation scores: per-class IoU, S_cls, S_assoc and LSTQ.

All set operations pool points over every frame of a sequence. Instances are
only defined for things classes; predicted instance id 0 means "no instance".
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

N_CLASSES = 6
CLASS_NAMES = ("Body", "Drawer", "HingedDoor", "Lid", "Leg", "Slider")


@dataclass
class SegmentationResult:
    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        self.semantic = np.asarray(self.semantic)
        self.instance = np.asarray(self.instance)
        if self.semantic.shape != self.instance.shape:
            raise ValueError("semantic and instance arrays are not congruent")


def _check(gt: SegmentationResult, pred: SegmentationResult):
    if gt.semantic.shape != pred.semantic.shape:
        raise ValueError(f"prediction shape {pred.semantic.shape} != ground truth {gt.semantic.shape}")


def class_counts(gt, pred, n_classes=N_CLASSES):
    """(TP, FP, FN) per class."""
    _check(gt, pred)
    g = gt.semantic.reshape(-1)
    p = pred.semantic.reshape(-1)
    conf = np.bincount(g * n_classes + p, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    tp = np.diag(conf).astype(np.int64)
    return tp, conf.sum(axis=0) - tp, conf.sum(axis=1) - tp


def iou_from_counts(tp, fp, fn, strict=False):
    denom = tp + fp + fn
    iou = np.where(denom > 0, tp / np.maximum(denom, 1), 1.0)
    if strict:
        present = (tp + fn) > 0
        return iou, float(iou[present].mean()) if present.any() else 1.0
    return iou, float(iou.mean())


def s_cls(gt: SegmentationResult, pred: SegmentationResult, n_classes=N_CLASSES, strict=False):
    """Mean IoU over all classes and the per-class IoU.

    A class absent from both ground truth and prediction scores 1; with
    ``strict`` only ground-truth-present classes enter the mean.
    """
    tp, fp, fn = class_counts(gt, pred, n_classes)
    iou, score = iou_from_counts(tp, fp, fn, strict)
    return score, iou


def association_terms(gt: SegmentationResult, pred: SegmentationResult, stuff_classes=(0,)):
    """Per ground-truth instance association score (the summand of S_assoc)."""
    _check(gt, pred)
    g_sem = gt.semantic.reshape(-1)
    g_ins = gt.instance.reshape(-1)
    p_ins = pred.instance.reshape(-1)
    things = ~np.isin(g_sem, stuff_classes)
    pred_sizes = dict(zip(*np.unique(p_ins[p_ins > 0], return_counts=True)))
    out = []
    for b in np.unique(g_ins[things]):
        in_b = things & (g_ins == b)
        size_b = int(in_b.sum())
        ids, tpa = np.unique(p_ins[in_b], return_counts=True)
        total = 0.0
        for a, t in zip(ids, tpa):
            if a <= 0:
                continue
            union = pred_sizes[a] + size_b - t
            total += t * (t / union)
        out.append(total / size_b)
    return out


def s_assoc(gt: SegmentationResult, pred: SegmentationResult, stuff_classes=(0,)) -> float:
    terms = association_terms(gt, pred, stuff_classes)
    return float(np.mean(terms)) if terms else 1.0


def lstq(s_cls_value: float, s_assoc_value: float) -> float:
    return math.sqrt(s_cls_value * s_assoc_value)


@dataclass
class MetricReport:
    iou: list
    s_cls: float
    s_assoc: float
    lstq: float
    n_instances: int = 0
    n_sequences: int = 0
    breakdown: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = list(CLASS_NAMES)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [("class", "IoU")]
        rows += [(n, f"{v:.4f}") for n, v in zip(CLASS_NAMES, self.iou)]
        rows += [("S_cls", f"{self.s_cls:.4f}"), ("S_assoc", f"{self.s_assoc:.4f}"),
                 ("LSTQ", f"{self.lstq:.4f}")]
        for name, sub in sorted(self.breakdown.items()):
            rows.append((f"[{name}] LSTQ", f"{sub['lstq']:.4f}"))
        w = max(len(r[0]) for r in rows)
        return "\n".join(f"{a:<{w}}  {b:>8}" for a, b in rows)


class Evaluator:
    """Accumulates sequences; class counts and instance terms are pooled over all of them."""

    def __init__(self, n_classes=N_CLASSES, strict=False, stuff_classes=(0,)):
        self.n_classes = n_classes
        self.strict = strict
        self.stuff_classes = stuff_classes
        self._groups: dict = {}

    def _group(self, name):
        return self._groups.setdefault(name, {
            "tp": np.zeros(self.n_classes, np.int64), "fp": np.zeros(self.n_classes, np.int64),
            "fn": np.zeros(self.n_classes, np.int64), "assoc": [], "n": 0})

    def add(self, gt: SegmentationResult, pred: SegmentationResult, group: str | None = None):
        tp, fp, fn = class_counts(gt, pred, self.n_classes)
        terms = association_terms(gt, pred, self.stuff_classes)
        for name in ("__all__",) + ((group,) if group else ()):
            g = self._group(name)
            g["tp"] += tp
            g["fp"] += fp
            g["fn"] += fn
            g["assoc"].extend(terms)
            g["n"] += 1

    def _report(self, g) -> MetricReport:
        iou, sc = iou_from_counts(g["tp"], g["fp"], g["fn"], self.strict)
        sa = float(np.mean(g["assoc"])) if g["assoc"] else 1.0
        return MetricReport([float(v) for v in iou], sc, sa, lstq(sc, sa), len(g["assoc"]), g["n"])

    def report(self) -> MetricReport:
        rep = self._report(self._group("__all__"))
        rep.breakdown = {k: self._report(g).to_dict() for k, g in self._groups.items() if k != "__all__"}
        for v in rep.breakdown.values():
            v.pop("breakdown", None)
        return rep


def evaluate(gt: SegmentationResult, pred: SegmentationResult, strict=False) -> MetricReport:
    ev = Evaluator(strict=strict)
    ev.add(gt, pred)
    return ev.report()
