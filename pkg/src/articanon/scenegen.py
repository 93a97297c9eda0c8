"""Procedural desk-scale articulated objects built from box shells.

Coordinates: x to the right, y into the object (the front face looks down -y),
z up; the body is centred on the origin. Every template leaves a 5 mm gap
between moving parts and the body so no sampled state interpenetrates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from .kinematics import PRISMATIC, REVOLUTE, ArticulatedModel, Joint, part_pose
from .trajectory import POWER, SIGMOID, TrajectoryProfile, sample_states


class SemanticClass(IntEnum):
    Body = 0
    Drawer = 1
    HingedDoor = 2
    Lid = 3
    Leg = 4
    Slider = 5


STUFF_CLASSES = (int(SemanticClass.Body),)
THINGS_CLASSES = tuple(int(c) for c in SemanticClass if c != SemanticClass.Body)

BASE_COLORS = {
    SemanticClass.Body: (0.25, 0.35, 0.80),
    SemanticClass.Drawer: (0.85, 0.20, 0.20),
    SemanticClass.HingedDoor: (0.95, 0.60, 0.15),
    SemanticClass.Lid: (0.25, 0.75, 0.30),
    SemanticClass.Leg: (0.55, 0.35, 0.20),
    SemanticClass.Slider: (0.60, 0.30, 0.75),
}

GAP = 0.005
PANEL = 0.02

SINGLE_KINDS = ("cabinet_door", "cabinet_drawer", "laptop_lid", "slider_window", "scissors_legs")
DOUBLE_KINDS = ("cabinet_two_door", "cabinet_door_drawer")
TEMPLATES = SINGLE_KINDS + DOUBLE_KINDS

DEFAULT_DIMS = {
    "cabinet_door": (0.6, 0.5, 0.8),
    "cabinet_drawer": (0.6, 0.5, 0.8),
    "cabinet_two_door": (0.6, 0.5, 0.8),
    "cabinet_door_drawer": (0.6, 0.5, 0.8),
    "laptop_lid": (0.35, 0.25, 0.05),
    "slider_window": (0.8, 0.08, 0.6),
    "scissors_legs": (0.2, 0.04, 0.015),
}

SUBSETS = {
    "S": SINGLE_KINDS,
    "D": DOUBLE_KINDS,
    "M": SINGLE_KINDS + DOUBLE_KINDS,
}

EXPONENT_MENU = (0.5, 1.0, 2.0)


class TemplateError(ValueError):
    pass


# Triangles of the unit cube [0,1]^3 as corner indices, corners enumerated by
# bits (x, y, z); winding is flipped where needed so normals face outward.
def _cube_tris():
    tris = []
    for axis in range(3):
        for side in (0, 1):
            quad = [i for i in range(8) if (i >> (2 - axis)) & 1 == side]
            a, b, c, e = quad  # corners ordered by their bit pattern
            for tri in ((a, b, e), (a, e, c)):
                tris.append(tri)
    corners = np.array([[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)], float)
    out = []
    for tri in tris:
        v = corners[list(tri)]
        n = np.cross(v[1] - v[0], v[2] - v[0])
        if np.dot(n, v.mean(axis=0) - 0.5) < 0:
            tri = (tri[0], tri[2], tri[1])
        out.append(tri)
    return np.array(out)


_CUBE_TRIS = _cube_tris()


def box_triangles(lo, hi) -> np.ndarray:
    """12 outward-oriented triangles ``(12, 3, 3)`` of an axis-aligned box."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    corners = np.array([[hi[0] if i & 4 else lo[0],
                         hi[1] if i & 2 else lo[1],
                         hi[2] if i & 1 else lo[2]] for i in range(8)])
    return corners[_CUBE_TRIS]


@dataclass
class Part:
    id: int
    semantic: SemanticClass
    boxes: list
    color: tuple
    name: str = ""

    @property
    def mesh(self) -> np.ndarray:
        return np.concatenate([box_triangles(lo, hi) for lo, hi in self.boxes])

    @property
    def vertices(self) -> np.ndarray:
        return self.mesh.reshape(-1, 3)

    @property
    def is_things(self) -> bool:
        return self.semantic != SemanticClass.Body


def _box(center, size):
    c = np.asarray(center, float)
    s = np.asarray(size, float) / 2.0
    return (tuple(c - s), tuple(c + s))


def _colors(rng, semantics):
    out = []
    for sem in semantics:
        base = np.array(BASE_COLORS[sem])
        jitter = rng.uniform(-0.08, 0.08, size=3)
        c = np.clip(base + jitter, 0.0, 1.0)
        while any(np.allclose(c, o, atol=1e-3) for o in out):
            c = np.clip(c + rng.uniform(-0.05, 0.05, size=3), 0.0, 1.0)
        out.append(tuple(float(v) for v in np.round(c, 6)))
    return out


def _layout(kind, dims):
    """Part boxes and joints for a template: list of (semantic, boxes, joint description or None)."""
    w, d, h = dims
    front = -d / 2 - GAP  # back face of front panels
    rev = (0.0, np.pi / 2)

    def door(x0, x1, z0, z1, hinge_x, axis_z):
        box = ((x0, front - PANEL, z0), (x1, front, z1))
        return (SemanticClass.HingedDoor, [box],
                (REVOLUTE, (0.0, 0.0, axis_z), (hinge_x, front, 0.0), rev))

    def drawer(x0, x1, z0, z1, depth):
        box = ((x0, front - depth, z0), (x1, front, z1))
        return (SemanticClass.Drawer, [box],
                (PRISMATIC, (0.0, -1.0, 0.0), (0.0, front, 0.0), (0.0, 0.4 * d)))

    body = (SemanticClass.Body, [_box((0, 0, 0), (w, d, h))], None)
    if kind == "cabinet_door":
        return [body, door(-w / 2, w / 2, -h / 2, h / 2, -w / 2, -1.0)]
    if kind == "cabinet_drawer":
        return [body, drawer(-0.4 * w, 0.4 * w, -0.15 * h, 0.15 * h, 0.15 * d)]
    if kind == "cabinet_two_door":
        # Hinges sit at the meeting edges; the half-panels swing outward from the centre.
        c = 0.1 * w
        return [body,
                door(-w / 2, -c, -h / 2, h / 2, -c, 1.0),
                door(c, w / 2, -h / 2, h / 2, c, -1.0)]
    if kind == "cabinet_door_drawer":
        zs = 0.0
        return [body,
                door(-w / 2, w / 2, zs + GAP, h / 2, -w / 2, -1.0),
                drawer(-w / 2, -0.15 * w, -h / 2, zs - GAP, 0.15 * d)]
    if kind == "laptop_lid":
        top = h / 2 + GAP
        lid = ((-w / 2, -d / 2, top), (w / 2, d / 2, top + 0.2 * h))
        return [body, (SemanticClass.Lid, [lid],
                       (REVOLUTE, (-1.0, 0.0, 0.0), (0.0, d / 2, top), rev))]
    if kind == "slider_window":
        pane = ((-w / 2, front - 0.2 * d, -h / 2), (0.0, front, h / 2))
        return [body, (SemanticClass.Slider, [pane],
                       (PRISMATIC, (1.0, 0.0, 0.0), (0.0, front, 0.0), (0.0, 0.4 * w)))]
    if kind == "scissors_legs":
        x0 = w / 2 + d
        leg = ((x0, -d / 2, -h / 2), (x0 + 0.6 * w, d / 2, h / 2))
        return [body, (SemanticClass.Leg, [leg],
                       (REVOLUTE, (0.0, 0.0, 1.0), (w / 2, 0.0, 0.0), rev))]
    raise TemplateError(f"unknown template {kind!r}; expected one of {TEMPLATES}")


def build_template(kind: str, dims: Sequence[float] | None = None, seed: int = 0) -> ArticulatedModel:
    """Build a procedural articulated object; ``dims`` is the body size (w, d, h) in meters."""
    if kind not in TEMPLATES:
        raise TemplateError(f"unknown template {kind!r}; expected one of {TEMPLATES}")
    dims = tuple(float(v) for v in (DEFAULT_DIMS[kind] if dims is None else dims))
    if len(dims) != 3 or min(dims) <= 0:
        raise TemplateError(f"dims must be three positive sizes, got {dims}")
    layout = _layout(kind, dims)
    rng = np.random.default_rng(seed)
    colors = _colors(rng, [sem for sem, _, _ in layout])
    parts, joints = [], []
    for pid, ((sem, boxes, jspec), color) in enumerate(zip(layout, colors)):
        boxes = [(tuple(float(v) for v in lo), tuple(float(v) for v in hi)) for lo, hi in boxes]
        parts.append(Part(pid, sem, boxes, color, name=f"{sem.name.lower()}_{pid}"))
        if jspec is not None:
            jkind, axis, anchor, limits = jspec
            joints.append(Joint(len(joints), jkind, axis, anchor,
                                tuple(float(v) for v in limits), 0, pid))
    return ArticulatedModel(parts, joints, root=0, meta={"kind": kind, "dims": dims, "seed": seed})


def model_to_dict(model: ArticulatedModel) -> dict:
    return {
        "format": "articanon-model",
        "version": 1,
        "kind": model.meta.get("kind"),
        "dims": list(model.meta.get("dims", ())),
        "seed": model.meta.get("seed"),
        "root": model.root,
        "parts": [{
            "id": p.id,
            "semantic": int(p.semantic),
            "semantic_name": p.semantic.name,
            "name": p.name,
            "color": list(p.color),
            "boxes": [[list(lo), list(hi)] for lo, hi in p.boxes],
        } for p in model.parts],
        "joints": [{
            "id": j.id,
            "kind": j.kind,
            "axis": list(j.axis),
            "anchor": list(j.anchor),
            "limits": list(j.limits),
            "parent_part": j.parent_part,
            "child_part": j.child_part,
        } for j in model.joints],
    }


def model_from_dict(d: dict) -> ArticulatedModel:
    if d.get("format") != "articanon-model":
        raise ValueError("not an articanon model document")
    parts = [Part(p["id"], SemanticClass(p["semantic"]),
                  [(tuple(lo), tuple(hi)) for lo, hi in p["boxes"]],
                  tuple(p["color"]), p.get("name", "")) for p in d["parts"]]
    joints = [Joint(j["id"], j["kind"], tuple(j["axis"]), tuple(j["anchor"]),
                    tuple(j["limits"]), j["parent_part"], j["child_part"]) for j in d["joints"]]
    meta = {"kind": d.get("kind"), "dims": tuple(d.get("dims", ())), "seed": d.get("seed")}
    return ArticulatedModel(parts, joints, root=d["root"], meta=meta)


def model_to_json(model: ArticulatedModel) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True)


def model_from_json(text: str) -> ArticulatedModel:
    return model_from_dict(json.loads(text))


def posed_vertices(model: ArticulatedModel, q) -> np.ndarray:
    return np.concatenate([part_pose(model, p.id, q).apply(p.vertices) for p in model.parts])


def bounding_radius(model: ArticulatedModel, states) -> float:
    """Largest distance from the origin to any vertex over the given states."""
    return float(max(np.linalg.norm(posed_vertices(model, q), axis=1).max() for q in states))


@dataclass
class ScenarioItem:
    name: str
    kind: str
    model: ArticulatedModel
    profiles: list
    states: list
    seed: int

    def metadata(self) -> dict:
        return {"name": self.name, "kind": self.kind, "seed": self.seed,
                "profiles": [p.to_dict() for p in self.profiles]}


def draw_profiles(rng: np.random.Generator, model: ArticulatedModel,
                  exponents=EXPONENT_MENU, T: float = 1.0) -> list[TrajectoryProfile]:
    profiles = []
    for j in model.joints:
        kind = POWER if rng.integers(2) == 0 else SIGMOID
        a = float(exponents[rng.integers(len(exponents))])
        inverted = bool(rng.integers(2))
        profiles.append(TrajectoryProfile(kind, j.limits[0], j.limits[1], T, a, inverted))
    return profiles


def scenario(seed: int, kinds: Sequence[str], n_states: int, exponents=EXPONENT_MENU,
             n_objects: int | None = None, T: float = 1.0, jitter: float = 0.15) -> list[ScenarioItem]:
    """Seeded list of objects with their trajectories and sampled articulation states.

    Objects cycle through a seeded shuffle of ``kinds``; body dims are jittered
    by up to ``jitter`` (relative) around the template defaults.
    """
    if n_states < 2:
        raise ValueError(f"need at least 2 states, got {n_states}")
    kinds = list(kinds)
    for k in kinds:
        if k not in TEMPLATES:
            raise TemplateError(f"unknown template {k!r}")
    n_objects = len(kinds) if n_objects is None else n_objects
    rng = np.random.default_rng(seed)
    order = [kinds[i] for i in rng.permutation(len(kinds))]
    child_seeds = np.random.SeedSequence(seed).generate_state(n_objects)
    items = []
    for i in range(n_objects):
        kind = order[i % len(order)]
        orng = np.random.default_rng(int(child_seeds[i]))
        dims = tuple(float(np.round(v * orng.uniform(1 - jitter, 1 + jitter), 4))
                     for v in DEFAULT_DIMS[kind])
        model = build_template(kind, dims, seed=int(child_seeds[i]))
        profiles = draw_profiles(orng, model, exponents, T)
        states = sample_states(profiles, n_states)
        items.append(ScenarioItem(f"obj_{i:03d}_{kind}", kind, model, profiles, states,
                                  int(child_seeds[i])))
    return items


def subset_scenario(subset: str, seed: int, n_states: int, n_objects: int, **kw) -> list[ScenarioItem]:
    if subset not in SUBSETS:
        raise ValueError(f"unknown subset {subset!r}; expected S, D or M")
    return scenario(seed, SUBSETS[subset], n_states, n_objects=n_objects, **kw)
