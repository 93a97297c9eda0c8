import numpy as np
import pytest
from oracles import rel_err

from articanon.kinematics import gt_offsets
from articanon.losses import OffsetField
from articanon.model import (LAYERS, OptimizerState, Prepared, TrainConfig, TrainingDiverged, adamw_step,
                             backward, forward, init_params, learning_rate, loss_and_grad, loss_curve_csv,
                             plateau_update, train)
from articanon.scenegen import build_template
from articanon.sensing import SequenceSample, capture_sequence, scene_cameras


def random_sample(S=2, N=30, seed=0):
    rng = np.random.default_rng(seed)
    xyz = rng.normal(scale=0.3, size=(S, N, 3))
    sem = rng.integers(0, 3, (S, N))
    return SequenceSample(xyz, rng.uniform(size=(S, N, 3)), sem, np.where(sem > 0, 1, 0),
                          tuple(range(S)))


def random_field(sample, seed=1, mask=None):
    rng = np.random.default_rng(seed)
    m = sample.semantic > 0 if mask is None else mask
    return OffsetField(None, rng.normal(scale=0.2, size=sample.xyz.shape), m)


def perturbed_params(seed=2):
    p = init_params(7)
    rng = np.random.default_rng(seed)
    return {k: v + rng.normal(scale=0.05, size=v.shape) for k, v in p.items()}


def test_output_shapes():
    s = random_sample(3, 20)
    logits, off = forward(init_params(), s)
    assert logits.shape == (3, 20, 6) and off.shape == (3, 20, 3)


def test_seeded_and_deterministic():
    a, b = init_params(42), init_params(42)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert set(a) == {f"{n}.{t}" for n in LAYERS for t in "Wb"}
    s = random_sample()
    la, oa = forward(a, s)
    lb, ob = forward(b, s)
    assert np.array_equal(la, lb) and np.array_equal(oa, ob)


def test_point_permutation_equivariance():
    s = random_sample(2, 40, seed=3)
    p = perturbed_params()
    perm = np.random.default_rng(4).permutation(40)
    sp = SequenceSample(s.xyz[:, perm], s.rgb[:, perm], s.semantic[:, perm], s.instance[:, perm])
    l1, o1 = forward(p, s)
    l2, o2 = forward(p, sp)
    assert np.allclose(l1[:, perm], l2, atol=1e-12) and np.allclose(o1[:, perm], o2, atol=1e-12)


def fd_check(p, prep, count, rng, h=1e-6):
    _, _, g = loss_and_grad(p, prep)
    keys = sorted(p)
    errs = []
    while len(errs) < count:
        k = keys[rng.integers(len(keys))]
        idx = tuple(rng.integers(0, d) for d in p[k].shape)
        if abs(g[k][idx]) < 1e-7:
            continue
        q = {a: b.copy() for a, b in p.items()}
        q[k][idx] += h
        up = loss_and_grad(q, prep)[0]
        q[k][idx] -= 2 * h
        down = loss_and_grad(q, prep)[0]
        errs.append(float(rel_err((up - down) / (2 * h), g[k][idx])))
    return errs


def test_gradient_matches_finite_differences():
    s = random_sample(2, 25, seed=5)
    prep = Prepared.from_sample(s, random_field(s))
    errs = fd_check(perturbed_params(), prep, 50, np.random.default_rng(6))
    assert max(errs) <= 1e-4


def test_zero_mask_gives_zero_offset_head_gradient():
    s = random_sample()
    g = backward(perturbed_params(), s, s.semantic, random_field(s, mask=np.zeros(s.semantic.shape, bool)))
    assert np.all(g["off.W"] == 0) and np.all(g["off.b"] == 0)


def test_semantic_head_ignores_offset_targets():
    s = random_sample()
    p = perturbed_params()
    g1 = backward(p, s, s.semantic, random_field(s, seed=1))
    g2 = backward(p, s, s.semantic, random_field(s, seed=9))
    assert np.array_equal(g1["sem.W"], g2["sem.W"]) and np.array_equal(g1["sem.b"], g2["sem.b"])
    assert not np.array_equal(g1["enc1.W"], g2["enc1.W"])


def test_nonfinite_loss_is_reported():
    s = random_sample()
    p = perturbed_params()
    p["off.b"] = p["off.b"] + np.nan
    with pytest.raises(TrainingDiverged):
        loss_and_grad(p, Prepared.from_sample(s, random_field(s)))


def test_adamw_fixed_point():
    cfg = TrainConfig(weight_decay=0.0)
    p = {"w": np.array([1.0, -2.0])}
    out = adamw_step(p, {"w": np.zeros(2)}, OptimizerState(), cfg, 3)
    assert np.array_equal(out["w"], p["w"])


def test_adamw_decoupled_decay():
    cfg = TrainConfig(weight_decay=0.01)
    st = OptimizerState()
    p = {"w": np.array([1.0, -2.0])}
    lr = learning_rate(cfg, st, 4)
    out = adamw_step(p, {"w": np.zeros(2)}, st, cfg, 4)
    assert np.allclose(out["w"], p["w"] * (1 - lr * 0.01), rtol=0, atol=1e-15)


def test_adamw_quadratic_minimum():
    cfg = TrainConfig(lr=0.02, warmup=1, weight_decay=0.0)
    st = OptimizerState()
    p = {"x": np.array([0.0])}
    for e in range(200):
        p = adamw_step(p, {"x": 2 * (p["x"] - 0.7)}, st, cfg, e)
    assert abs(p["x"][0] - 0.7) <= 1e-3


def test_warmup_and_plateau():
    cfg = TrainConfig(lr=1e-3, warmup=10, patience=2)
    st = OptimizerState()
    assert learning_rate(cfg, st, 0) == pytest.approx(1e-4)
    assert learning_rate(cfg, st, 9) == pytest.approx(1e-3)
    for e, loss in enumerate([5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 1.0, 1.0, 1.0]):
        plateau_update(st, loss, e, cfg)
    assert st.lr_scale == 0.5
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


@pytest.fixture(scope="module")
def tiny_object():
    m = build_template("cabinet_door", seed=1)
    states = [np.array([0.0]), np.array([0.8]), np.array([1.5])]
    cams = scene_cameras(m, states, 6, 40)
    s = SequenceSample.from_frames(capture_sequence(m, states, cams, 192))
    return Prepared.from_sample(s, gt_offsets(s, m, states), "door")


def test_training_is_deterministic_and_order_free(tiny_object):
    cfg = TrainConfig(epochs=5)
    other = Prepared(tiny_object.features[::-1].copy(), tiny_object.neighbors[::-1],
                     tiny_object.labels[::-1].copy(), OffsetField(None, tiny_object.offsets.target[::-1].copy(),
                                                                  tiny_object.offsets.mask[::-1].copy()), "b")
    p1, h1 = train([tiny_object, other], cfg)
    p2, h2 = train([other, tiny_object], cfg)
    assert loss_curve_csv(h1) == loss_curve_csv(h2)
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_overfit_single_object(tiny_object):
    _, hist = train([tiny_object], TrainConfig(epochs=500, lr=3e-3))
    assert min(r["l_canon"] for r in hist) < 0.05
    assert hist[-1]["l_sem"] + hist[-1]["l_canon"] <= 1.05 * (hist[0]["l_sem"] + hist[0]["l_canon"])


def test_empty_training_set():
    with pytest.raises(ValueError):
        train([], TrainConfig())


def test_loss_curve_csv():
    text = loss_curve_csv([{"epoch": 1, "l_sem": 0.5, "l_canon": 0.25, "lr": 1e-4}])
    assert text.splitlines() == ["epoch,l_sem,l_canon,lr", "1,0.5,0.25,0.0001"]
