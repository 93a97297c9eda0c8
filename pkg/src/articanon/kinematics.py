"""Rigid transforms, joint models and forward kinematics for articulated objects.

Part geometry is expressed in the origin frame at the zero joint configuration;
joint axes and anchors are expressed in the parent part's frame, so every joint
transform reduces to the identity at value 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .losses import OffsetField

if TYPE_CHECKING:
    from .scenegen import Part
    from .sensing import SequenceSample

log = logging.getLogger(__name__)

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
JOINT_KINDS = (REVOLUTE, PRISMATIC)

# Tolerance for limit checks; trajectory endpoints can land one ulp outside.
LIMIT_TOL = 1e-9

CANONICAL = "canonical"
CENTROID4D = "centroid4d"
TARGET_MODES = (CANONICAL, CENTROID4D)


class KinematicsError(ValueError):
    pass


class JointLimitError(KinematicsError):
    pass


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    __matmul__ = compose

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Transform a point ``(3,)`` or a batch of points ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        return x @ self.rotation.T + self.translation

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        ortho = np.max(np.abs(R.T @ R - np.eye(3))) <= tol
        return bool(ortho and abs(np.linalg.det(R) - 1.0) <= tol)


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit ``axis``."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


@dataclass(frozen=True)
class Joint:
    id: int
    kind: str
    axis: tuple
    anchor: tuple
    limits: tuple
    parent_part: int
    child_part: int

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise KinematicsError(f"joint {self.id}: unknown kind {self.kind!r}")
        axis = tuple(float(a) for a in self.axis)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise KinematicsError(f"joint {self.id}: axis {axis} is not unit length")
        lo, hi = (float(v) for v in self.limits)
        if not lo < hi:
            raise KinematicsError(f"joint {self.id}: limits {self.limits} require q_min < q_max")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "anchor", tuple(float(a) for a in self.anchor))
        object.__setattr__(self, "limits", (lo, hi))

    def check(self, value: float) -> None:
        lo, hi = self.limits
        if not (lo - LIMIT_TOL <= value <= hi + LIMIT_TOL):
            raise JointLimitError(
                f"joint {self.id} ({self.kind}): value {value!r} outside limits [{lo}, {hi}]"
            )


@dataclass
class ArticulatedModel:
    parts: list
    joints: list
    root: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [p.id for p in self.parts]
        if ids != list(range(len(ids))):
            raise KinematicsError(f"part ids must be dense from 0, got {ids}")
        if self.parts and not 0 <= self.root < len(self.parts):
            raise KinematicsError(f"root {self.root} is not a part")
        parent_joint: dict[int, Joint] = {}
        for j in self.joints:
            for pid in (j.parent_part, j.child_part):
                if not 0 <= pid < len(self.parts):
                    raise KinematicsError(f"joint {j.id} references unknown part {pid}")
            if j.child_part == self.root:
                raise KinematicsError(f"joint {j.id} has the root part as child")
            if j.child_part in parent_joint:
                raise KinematicsError(f"part {j.child_part} has more than one parent joint")
            parent_joint[j.child_part] = j
        for p in ids:
            if p != self.root and p not in parent_joint:
                raise KinematicsError(f"part {p} is not attached by any joint")
        self._parent_joint = parent_joint
        self._joint_index = {j.id: k for k, j in enumerate(self.joints)}
        # Cycle check: every chain must terminate at the root.
        for p in ids:
            seen = set()
            while p != self.root:
                if p in seen:
                    raise KinematicsError("joint graph contains a cycle")
                seen.add(p)
                p = parent_joint[p].parent_part

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def chain(self, part: int) -> list[Joint]:
        """Joints from the root down to ``part`` (empty for the root)."""
        if not 0 <= part < len(self.parts):
            raise KinematicsError(f"unknown part id {part}")
        out = []
        while part != self.root:
            j = self._parent_joint[part]
            out.append(j)
            part = j.parent_part
        return out[::-1]

    def joint_value(self, q: Sequence[float], joint: Joint) -> float:
        return float(q[self._joint_index[joint.id]])

    def check_config(self, q: Sequence[float]) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != len(self.joints):
            raise KinematicsError(f"expected {len(self.joints)} joint values, got {q.shape[0]}")
        for j, v in zip(self.joints, q):
            j.check(v)
        return q


def joint_transform(joint: Joint, value: float) -> RigidTransform:
    joint.check(value)
    axis = np.asarray(joint.axis)
    if joint.kind == PRISMATIC:
        return RigidTransform(np.eye(3), value * axis)
    R = axis_angle_matrix(axis, value)
    anchor = np.asarray(joint.anchor)
    return RigidTransform(R, anchor - R @ anchor)


def part_pose(model: ArticulatedModel, part: int, q: Sequence[float]) -> RigidTransform:
    """Pose of ``part`` in the origin frame: ordered product of joint transforms along its chain."""
    chain = model.chain(part)
    if len(q) != model.n_joints:
        raise KinematicsError(f"expected {model.n_joints} joint values, got {len(q)}")
    T = RigidTransform.identity()
    for j in chain:
        T = T @ joint_transform(j, model.joint_value(q, j))
    return T


def canonical_map(model: ArticulatedModel, part: int, q_t, q_c, x: np.ndarray) -> np.ndarray:
    """Move points observed on ``part`` at configuration ``q_t`` to where they sit at ``q_c``."""
    T = part_pose(model, part, q_c) @ part_pose(model, part, q_t).inverse()
    return T.apply(x)


def canonical_config(model: ArticulatedModel) -> np.ndarray:
    return np.array([(j.limits[0] + j.limits[1]) / 2.0 for j in model.joints])


def part_targets(
    sample: "SequenceSample",
    model: ArticulatedModel,
    states: Sequence[Sequence[float]],
    q_c,
    target_mode: str = CANONICAL,
    stuff_classes=(0,),
) -> dict[int, np.ndarray]:
    """Per-part regression target, pooled over every frame of the sample."""
    if target_mode not in TARGET_MODES:
        raise ValueError(f"unknown target mode {target_mode!r}")
    S = sample.xyz.shape[0]
    if len(states) != S:
        raise KinematicsError(f"{S} frames but {len(states)} articulation states")
    things = ~np.isin(sample.semantic, stuff_classes)
    targets = {}
    for p in np.unique(sample.instance[things]):
        p = int(p)
        pooled = []
        for s in range(S):
            sel = (sample.instance[s] == p) & things[s]
            if not sel.any():
                continue
            x = sample.xyz[s][sel]
            if target_mode == CANONICAL:
                x = canonical_map(model, p, states[s], q_c, x)
            pooled.append(x)
        targets[p] = np.concatenate(pooled).mean(axis=0)
    for part in model.parts:
        if part.id not in targets and not np.isin(part.semantic, stuff_classes):
            log.warning("part %d has no points in the sample; skipped", part.id)
    return targets


def gt_offsets(
    sample: "SequenceSample",
    model: ArticulatedModel,
    states,
    q_c=None,
    target_mode: str = CANONICAL,
    stuff_classes=(0,),
) -> OffsetField:
    """Ground-truth offsets from each things-point to its part target; stuff points get zero."""
    if q_c is None:
        q_c = canonical_config(model)
    targets = part_targets(sample, model, states, q_c, target_mode, stuff_classes)
    target = np.zeros_like(sample.xyz, dtype=float)
    mask = ~np.isin(sample.semantic, stuff_classes)
    for p, c in targets.items():
        sel = (sample.instance == p) & mask
        target[sel] = c - sample.xyz[sel]
    return OffsetField(predicted=None, target=target, mask=mask)
