"""Generate a small dataset, cluster with ground-truth offsets, and score it.

This is the same path as `articanon generate` + `oracle-segment` + `evaluate`,
driven from the library at a reduced resolution so it finishes in seconds.

    python3 demos/oracle_pipeline.py /tmp/articanon_demo
"""
import sys
from pathlib import Path

from articanon import dataset as ds
from articanon.metrics import Evaluator
from articanon.scenegen import STUFF_CLASSES

root = Path(sys.argv[1] if len(sys.argv) > 1 else "articanon_demo")
manifest = ds.generate_dataset(root, "M", seed=42, n_states=20, n_views=8, points=512, resolution=64,
                               n_train=7, n_test=0)
print(f"rendered {len(manifest['objects'])} objects into {root}")

ev = Evaluator(stuff_classes=STUFF_CLASSES)
for ref in ds.sample_refs(manifest):  # one maximally spaced 3-frame window per object
    gt = ds.ground_truth(ds.load_sample(root, ref.name, ref.states))
    ev.add(gt, ds.oracle_segment(root, ref), group=ref.kind)
print(ev.report().to_table())
