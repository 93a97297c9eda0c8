import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import assoc_by_loops, confusion_iou

from articanon.metrics import (Evaluator, SegmentationResult, class_counts, evaluate, lstq, s_assoc,
                               s_cls)


def seg(sem, ins):
    return SegmentationResult(np.asarray(sem), np.asarray(ins))


def test_perfect_prediction():
    gt = seg([[0, 1, 2, 2]], [[0, 1, 2, 2]])
    score, iou = s_cls(gt, gt)
    assert score == 1.0 and np.all(iou == 1.0)
    assert s_assoc(gt, gt) == 1.0


def test_disjoint_classes_score_zero_for_present():
    gt = seg([0, 0, 1, 1], [0, 0, 1, 1])
    pred = seg([1, 1, 0, 0], [0, 0, 0, 0])
    _, iou = s_cls(gt, pred)
    assert iou[0] == 0 and iou[1] == 0
    assert s_cls(gt, pred, strict=True)[0] == 0.0


def test_hand_built_confusion():
    # class 1: TP 3, FP 1, FN 2; class 0 perfect on its own points
    gt = np.array([1, 1, 1, 1, 1, 0, 0, 0])
    pred = np.array([1, 1, 1, 0, 0, 1, 0, 0])
    assert confusion_iou(gt, pred, 1) == (3, 1, 2)
    _, iou = s_cls(seg(gt, gt), seg(pred, pred), n_classes=2)
    assert iou[1] == pytest.approx(0.5)


def test_vacuous_and_gt_only_classes():
    gt = seg([0, 1], [0, 1])
    pred = seg([0, 2], [0, 1])
    score, iou = s_cls(gt, pred)
    assert iou[3] == 1.0            # absent everywhere
    assert iou[1] == 0.0            # in gt, never predicted
    assert iou[2] == 0.0            # predicted, not in gt
    assert score == pytest.approx((1 + 0 + 0 + 1 + 1 + 1) / 6)
    assert s_cls(gt, pred, strict=True)[0] == pytest.approx(0.5)


def test_split_instance_scores_half():
    gt = seg([1, 1, 1, 1], [1, 1, 1, 1])
    pred = seg([1, 1, 1, 1], [1, 1, 2, 2])
    assert s_assoc(gt, pred) == pytest.approx(0.5)


def test_non_overlapping_ids_score_zero():
    gt = seg([0, 0, 1, 1], [0, 0, 1, 1])
    pred = seg([0, 0, 1, 1], [3, 3, 0, 0])
    assert s_assoc(gt, pred) == 0.0


def test_lstq_values():
    assert lstq(1, 1) == 1
    assert lstq(0.8894, 0.8390) == pytest.approx(0.8639, abs=5e-4)
    assert lstq(0.7964, 0.6915) == pytest.approx(0.7421, abs=5e-4)


def random_case(seed, n=40):
    rng = np.random.default_rng(seed)
    gsem = rng.integers(0, 4, n)
    gins = np.where(gsem == 0, 0, rng.integers(1, 4, n))
    pins = rng.integers(0, 5, n)
    return gsem, gins, pins


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_assoc_matches_set_enumeration(seed):
    gsem, gins, pins = random_case(seed)
    got = s_assoc(seg(gsem, gins), seg(gsem, pins))
    assert got == pytest.approx(assoc_by_loops(gins, pins, gsem != 0), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_relabel_invariance(seed):
    gsem, gins, pins = random_case(seed)
    perm = np.r_[0, np.random.default_rng(seed).permutation(np.arange(1, 5))]
    a = s_assoc(seg(gsem, gins), seg(gsem, pins))
    b = s_assoc(seg(gsem, gins), seg(gsem, perm[pins]))
    assert a == pytest.approx(b, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_corrupting_a_correct_point_never_helps(seed):
    rng = np.random.default_rng(seed)
    gsem, gins, _ = random_case(seed)
    pred = gins.copy()
    things = np.flatnonzero(gsem != 0)
    if not len(things):
        return
    k = rng.choice(things)
    worse = pred.copy()
    worse[k] = rng.choice([v for v in range(0, 6) if v != pred[k]])
    assert s_assoc(seg(gsem, gins), seg(gsem, worse)) <= s_assoc(seg(gsem, gins), seg(gsem, pred)) + 1e-12


def test_incongruent_inputs():
    with pytest.raises(ValueError):
        s_cls(seg([0, 1], [0, 1]), seg([0, 1, 1], [0, 1, 1]))
    with pytest.raises(ValueError):
        SegmentationResult(np.zeros(3), np.zeros(4))


def test_counts_pool_over_frames():
    gt = seg([[0, 1], [1, 1]], [[0, 1], [1, 1]])
    pred = seg([[0, 1], [0, 1]], [[0, 1], [0, 1]])
    tp, fp, fn = class_counts(gt, pred)
    assert (tp[1], fp[1], fn[1]) == (2, 0, 1)


def test_report_and_accumulation():
    gt = seg([0, 1, 1, 2], [0, 1, 1, 2])
    ev = Evaluator()
    ev.add(gt, gt, group="a")
    ev.add(gt, seg([0, 1, 0, 2], [0, 1, 0, 2]), group="b")
    rep = ev.report()
    assert abs(rep.lstq - np.sqrt(rep.s_cls * rep.s_assoc)) <= 1e-12
    assert rep.n_sequences == 2 and rep.n_instances == 4
    assert set(rep.breakdown) == {"a", "b"}
    assert rep.breakdown["a"]["lstq"] == 1.0
    d = json.loads(rep.to_json())
    assert len(d["iou"]) == 6 and "LSTQ" in rep.to_table()
    single = evaluate(gt, gt)
    assert single.s_cls == single.s_assoc == single.lstq == 1.0
