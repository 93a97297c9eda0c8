"""Why canonical offsets keep moving parts apart.

Renders three states of a cabinet with a door and a drawer, builds both kinds
of regression target, and prints how far apart the two parts' targets end up.

    python3 demos/canonical_targets.py
"""
import numpy as np

from articanon.kinematics import CANONICAL, CENTROID4D, gt_offsets
from articanon.scenegen import STUFF_CLASSES, scenario
from articanon.sensing import SequenceSample, capture_sequence, scene_cameras

item = scenario(42, ["cabinet_door_drawer"], 100)[0]
states = [item.states[i] for i in (0, 49, 99)]
print(f"{item.name}: joint values per frame", [np.round(q, 3).tolist() for q in states])

cams = scene_cameras(item.model, states, 12, 96)
sample = SequenceSample.from_frames(capture_sequence(item.model, states, cams, 1024))

for mode in (CANONICAL, CENTROID4D):
    f = gt_offsets(sample, item.model, states, target_mode=mode, stuff_classes=STUFF_CLASSES)
    pts = sample.xyz + f.target
    centres = {int(p): pts[(sample.instance == p) & f.mask].mean(axis=0)
               for p in np.unique(sample.instance[f.mask])}
    a, b = sorted(centres)
    # every point of a part lands on one target; the question is how close the two targets are
    print(f"{mode:>10}: door/drawer targets {np.linalg.norm(centres[a] - centres[b]):.3f} m apart")
