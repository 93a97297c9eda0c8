"""Overfit the per-point model on one object and cluster its predicted offsets.

    python3 demos/train_tiny.py
"""
import numpy as np

from articanon.clustering import default_eps, segment_instances
from articanon.kinematics import gt_offsets
from articanon.metrics import SegmentationResult, evaluate
from articanon.model import Prepared, TrainConfig, predict, train
from articanon.scenegen import STUFF_CLASSES, bounding_radius, scenario
from articanon.sensing import SequenceSample, capture_sequence, scene_cameras

item = scenario(42, ["laptop_lid"], 100)[0]
cams = scene_cameras(item.model, item.states, 12, 96)


def window(ids):
    states = [item.states[i] for i in ids]
    return states, SequenceSample.from_frames(capture_sequence(item.model, states, cams, 512))


states, sample = window([0, 49, 99])
prep = Prepared.from_sample(sample, gt_offsets(sample, item.model, states, stuff_classes=STUFF_CLASSES))
params, history = train([prep], TrainConfig(epochs=150),
                        progress=lambda r: r["epoch"] % 30 == 0 and print(
                            f"epoch {r['epoch']:3d}  l_sem {r['l_sem']:.4f}  l_canon {r['l_canon']:.4f}"))

# score on states the model never saw
_, held = window([25, 50, 75])
sem, off = predict(params, held)
pred = segment_instances(held, off, sem, default_eps(bounding_radius(item.model, item.states)), 10,
                         STUFF_CLASSES)
gt = SegmentationResult(held.semantic, np.where(held.semantic == 0, 0, held.instance))
print(evaluate(gt, pred).to_table())
