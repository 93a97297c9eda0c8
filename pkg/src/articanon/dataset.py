"""On-disk dataset layout, sequence selection and the oracle / prediction pipelines.

Layout under a dataset root::

    manifest.json
    objects/<name>/model.json
    objects/<name>/trajectory.json
    objects/<name>/frames/state_0000.a4df ...

A prediction directory holds ``predictions.json`` plus one ``.a4dp`` per
sequence sample, whose point order is the concatenation of that sample's frame
files in listed order.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import DEFAULT_MIN_PTS, default_eps, segment_instances
from .io import (FormatError, read_frame, read_json, read_prediction, write_frame,
                 write_json, write_prediction)
from .kinematics import CANONICAL, gt_offsets
from .metrics import Evaluator, SegmentationResult
from .scenegen import STUFF_CLASSES, bounding_radius, model_from_json, model_to_json, subset_scenario
from .sensing import (DEFAULT_POINTS, DEFAULT_RESOLUTION, DEFAULT_VIEWS, SequenceSample,
                      capture_sequence, scene_cameras)
from .trajectory import TrajectoryProfile

log = logging.getLogger(__name__)

MAX, ADJACENT = "max", "adjacent"
DEFAULT_TRAIN, DEFAULT_TEST = 8, 4


@dataclass
class RunManifest:
    root: str
    subset: str
    seed: int
    n_states: int
    n_views: int
    points: int
    frames: int
    spacing: str
    templates: list
    resolution: int = DEFAULT_RESOLUTION
    n_train: int = DEFAULT_TRAIN
    n_test: int = DEFAULT_TEST
    version: str = __version__

    def to_dict(self):
        return asdict(self)


def select_windows(n_states: int, frames: int, spacing: str = MAX) -> list[list[int]]:
    """State indices of every sequence sample drawn from one clip.

    ``max`` gives a single window spread over the clip, i*(n-1)//(S-1);
    ``adjacent`` tiles the clip with non-overlapping runs of consecutive states.
    """
    if frames < 1 or frames > n_states:
        raise ValueError(f"cannot take {frames} frames from {n_states} states")
    if spacing == MAX:
        if frames == 1:
            return [[0]]
        return [[i * (n_states - 1) // (frames - 1) for i in range(frames)]]
    if spacing == ADJACENT:
        return [list(range(s, s + frames)) for s in range(0, n_states - frames + 1, frames)]
    raise ValueError(f"unknown spacing policy {spacing!r}")


def _object_dir(root, name) -> Path:
    return Path(root) / "objects" / name


def frame_path(root, name, state: int) -> Path:
    return _object_dir(root, name) / "frames" / f"state_{state:04d}.a4df"


def generate_dataset(root, subset="M", seed=42, n_states=100, n_views=DEFAULT_VIEWS,
                     points=DEFAULT_POINTS, resolution=DEFAULT_RESOLUTION,
                     n_train=DEFAULT_TRAIN, n_test=DEFAULT_TEST, frames=3, spacing=MAX,
                     threads=None, progress=None) -> dict:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    select_windows(n_states, frames, spacing)  # validate early
    items = subset_scenario(subset, seed, n_states, n_train + n_test)
    objects = []
    for k, item in enumerate(items):
        odir = _object_dir(root, item.name)
        (odir / "frames").mkdir(parents=True, exist_ok=True)
        (odir / "model.json").write_text(model_to_json(item.model) + "\n")
        write_json(odir / "trajectory.json", {
            **item.metadata(), "states": [list(map(float, q)) for q in item.states]})
        cams = scene_cameras(item.model, item.states, n_views, resolution)
        for s, fr in enumerate(capture_sequence(item.model, item.states, cams, points, threads)):
            write_frame(frame_path(root, item.name, s), fr)
        objects.append({"name": item.name, "kind": item.kind,
                        "split": "train" if k < n_train else "test"})
        if progress:
            progress(item.name)
    manifest = RunManifest(str(root), subset, seed, n_states, n_views, points, frames, spacing,
                           sorted({o["kind"] for o in objects}), resolution, n_train, n_test).to_dict()
    manifest["root"] = "."
    manifest["objects"] = objects
    write_json(root / "manifest.json", manifest)
    return manifest


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"{root}: no manifest.json (not a dataset directory)")
    return read_json(path)


def select_objects(manifest, split="all") -> list[dict]:
    objs = sorted(manifest["objects"], key=lambda o: o["name"])
    if split == "all":
        return objs
    return [o for o in objs if o["split"] == split]


@dataclass
class ObjectRecord:
    name: str
    kind: str
    model: object
    states: list
    profiles: list


def load_object(root, entry) -> ObjectRecord:
    odir = _object_dir(root, entry["name"])
    model = model_from_json((odir / "model.json").read_text())
    traj = read_json(odir / "trajectory.json")
    states = [np.array(q, float) for q in traj["states"]]
    profiles = [TrajectoryProfile.from_dict(p) for p in traj["profiles"]]
    return ObjectRecord(entry["name"], entry["kind"], model, states, profiles)


def load_sample(root, name: str, state_ids) -> SequenceSample:
    frames = []
    for s in state_ids:
        path = frame_path(root, name, s)
        if not path.exists():
            raise FileNotFoundError(f"missing frame file {path}")
        frames.append(read_frame(path, s))
    return SequenceSample.from_frames(frames)


@dataclass
class SampleRef:
    """One sequence sample: an object plus the state indices of its frames."""
    name: str
    kind: str
    states: list

    @property
    def key(self) -> str:
        return f"{self.name}__" + "-".join(f"{s:04d}" for s in self.states)


def sample_refs(manifest, split="all", frames=None, spacing=None, state_ids=None) -> list[SampleRef]:
    frames = manifest["frames"] if frames is None else frames
    spacing = manifest["spacing"] if spacing is None else spacing
    if state_ids is not None:
        bad = [s for s in state_ids if not 0 <= s < manifest["n_states"]]
        if bad:
            raise ValueError(f"state ids {bad} outside 0..{manifest['n_states'] - 1}")
        windows = [list(state_ids)]
    else:
        windows = select_windows(manifest["n_states"], frames, spacing)
    return [SampleRef(o["name"], o["kind"], w) for o in select_objects(manifest, split) for w in windows]


def ground_truth(sample: SequenceSample) -> SegmentationResult:
    inst = np.where(np.isin(sample.semantic, STUFF_CLASSES), 0, sample.instance)
    return SegmentationResult(sample.semantic.copy(), inst)


def clustering_eps(record: ObjectRecord, eps=None) -> float:
    return default_eps(bounding_radius(record.model, record.states)) if eps is None else eps


def oracle_segment(root, ref: SampleRef, target_mode=CANONICAL, eps=None,
                   min_pts=DEFAULT_MIN_PTS) -> SegmentationResult:
    """Cluster with ground-truth semantics and ground-truth offsets."""
    rec = load_object(root, {"name": ref.name, "kind": ref.kind})
    sample = load_sample(root, ref.name, ref.states)
    fld = gt_offsets(sample, rec.model, [rec.states[s] for s in ref.states], target_mode=target_mode,
                     stuff_classes=STUFF_CLASSES)
    return segment_instances(sample, fld.target, sample.semantic, clustering_eps(rec, eps),
                             min_pts, STUFF_CLASSES)


def write_predictions(out, refs, results, meta: dict) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    listing = []
    for ref, res in zip(refs, results):
        fname = f"{ref.key}.a4dp"
        write_prediction(out / fname, res.semantic, res.instance)
        listing.append({"name": ref.name, "kind": ref.kind, "states": ref.states, "file": fname})
    write_json(out / "predictions.json", {**meta, "samples": listing})


def read_predictions(pred_dir) -> tuple[dict, list]:
    pred_dir = Path(pred_dir)
    path = pred_dir / "predictions.json"
    if not path.exists():
        raise FileNotFoundError(f"{pred_dir}: no predictions.json")
    meta = read_json(path)
    out = []
    for entry in meta["samples"]:
        sem, ins = read_prediction(pred_dir / entry["file"])
        out.append((SampleRef(entry["name"], entry["kind"], entry["states"]), sem, ins))
    return meta, out


def evaluate_predictions(root, pred_dir, strict=False) -> "Evaluator":
    """Score a prediction directory against the dataset's ground truth."""
    _, preds = read_predictions(pred_dir)
    ev = Evaluator(strict=strict, stuff_classes=STUFF_CLASSES)
    for ref, sem, ins in preds:
        gt = ground_truth(load_sample(root, ref.name, ref.states))
        if sem.size != gt.semantic.size:
            raise FormatError(f"{ref.key}: prediction has {sem.size} points, ground truth {gt.semantic.size}")
        ev.add(gt, SegmentationResult(sem.reshape(gt.semantic.shape), ins.reshape(gt.semantic.shape)),
               group=ref.kind)
    return ev
