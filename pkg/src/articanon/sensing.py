"""Viewing-sphere cameras, ray-cast RGB-D rendering, back-projection, fusion and FPS."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _raycast
from .kinematics import ArticulatedModel, part_pose
from .scenegen import bounding_radius, box_triangles

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

DEFAULT_RESOLUTION = 128
DEFAULT_VIEWS = 18
DEFAULT_POINTS = 2048
RADIUS_FACTOR = 2.5


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("ARTIC_CANON_THREADS", "1")))
    except ValueError:
        return 1


def sphere_position(r: float, theta: float, phi: float) -> np.ndarray:
    """Point on a sphere of radius ``r`` from polar angle ``theta`` and azimuth ``phi``."""
    return r * np.array([math.sin(theta) * math.cos(phi),
                         math.sin(theta) * math.sin(phi),
                         math.cos(theta)])


def fibonacci_angles(count: int) -> list[tuple[float, float]]:
    out = []
    for j in range(count):
        z = 1.0 - (2.0 * j + 1.0) / count
        out.append((math.acos(z), (j * GOLDEN_ANGLE) % (2.0 * math.pi)))
    return out


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    focal: float = 150.0
    width: int = DEFAULT_RESOLUTION
    height: int = DEFAULT_RESOLUTION
    cx: Optional[float] = None
    cy: Optional[float] = None

    def __post_init__(self):
        for name in ("position", "look_at", "up"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.allclose(self.position, self.look_at):
            raise ValueError("camera position coincides with look_at")
        # Pixel (u, v) is the integer index; the centre of an odd-sized image is exact.
        if self.cx is None:
            object.__setattr__(self, "cx", (self.width - 1) / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", (self.height - 1) / 2.0)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, down, forward) orthonormal viewing axes."""
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        up = self.up
        if abs(np.dot(up, fwd)) > 1.0 - 1e-6:
            up = np.array([0.0, 1.0, 0.0]) if abs(fwd[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        return right, down, fwd

    def ray_directions(self) -> np.ndarray:
        """Unit ray direction per pixel, row-major ``(H*W, 3)``."""
        right, down, fwd = self.basis()
        v, u = np.mgrid[0:self.height, 0:self.width]
        x = (u.reshape(-1) - self.cx) / self.focal
        y = (v.reshape(-1) - self.cy) / self.focal
        d = fwd[None, :] + x[:, None] * right[None, :] + y[:, None] * down[None, :]
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Pixel coordinates ``(u, v)`` of world points."""
        right, down, fwd = self.basis()
        rel = np.asarray(points, float) - self.position
        z = rel @ fwd
        return np.stack([self.cx + self.focal * (rel @ right) / z,
                         self.cy + self.focal * (rel @ down) / z], axis=-1)


def focal_for_radius(r: float, radius: float, width: int, margin: float = 1.05) -> float:
    """Focal length (pixels) that frames a sphere of ``radius`` seen from distance ``r``."""
    half = math.asin(min(radius * margin / r, 0.999))
    return (width / 2.0) / math.tan(half)


def camera_positions(r: float, count: int, *, look_at=(0.0, 0.0, 0.0), focal: float | None = None,
                     width: int = DEFAULT_RESOLUTION, height: int | None = None,
                     object_radius: float | None = None) -> list[CameraPose]:
    """Cameras on a Fibonacci lattice of the sphere of radius ``r``, all aimed at the origin."""
    if not r > 0:
        raise ValueError("sphere radius must be positive")
    if count < 1:
        raise ValueError("need at least one camera")
    height = width if height is None else height
    if focal is None:
        focal = focal_for_radius(r, r / RADIUS_FACTOR if object_radius is None else object_radius, width)
    look_at = np.asarray(look_at, float)
    return [CameraPose(look_at + sphere_position(r, th, ph), look_at, focal=focal,
                       width=width, height=height)
            for th, ph in fibonacci_angles(count)]


@dataclass
class RenderOutput:
    depth: np.ndarray      # (H, W) Euclidean ray distance, inf where invalid
    rgb: np.ndarray        # (H, W, 3)
    semantic: np.ndarray   # (H, W) int, -1 where invalid
    instance: np.ndarray   # (H, W) int, -1 where invalid

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth)


@dataclass
class PointCloudFrame:
    xyz: np.ndarray
    rgb: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    state_index: int = 0
    view: Optional[np.ndarray] = None
    pixel: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.xyz)
        for name in ("rgb", "semantic", "instance"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {n}")

    def __len__(self):
        return len(self.xyz)

    def take(self, idx) -> "PointCloudFrame":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return PointCloudFrame(self.xyz[idx], self.rgb[idx], self.semantic[idx], self.instance[idx],
                               self.state_index, pick(self.view), pick(self.pixel))


@dataclass
class SequenceSample:
    xyz: np.ndarray        # (S, N, 3)
    rgb: np.ndarray        # (S, N, 3)
    semantic: np.ndarray   # (S, N)
    instance: np.ndarray   # (S, N)
    state_indices: tuple = ()

    @property
    def S(self) -> int:
        return self.xyz.shape[0]

    @property
    def N(self) -> int:
        return self.xyz.shape[1]

    @classmethod
    def from_frames(cls, frames: Sequence[PointCloudFrame]) -> "SequenceSample":
        if not frames:
            raise ValueError("a sequence needs at least one frame")
        n = {len(f) for f in frames}
        if len(n) != 1:
            raise ValueError(f"frames have differing point counts {sorted(n)}")
        return cls(np.stack([f.xyz for f in frames]).astype(float),
                   np.stack([f.rgb for f in frames]).astype(float),
                   np.stack([f.semantic for f in frames]).astype(np.int64),
                   np.stack([f.instance for f in frames]).astype(np.int64),
                   tuple(int(f.state_index) for f in frames))

    def features(self) -> np.ndarray:
        """Per-point input (x, y, z, r, g, b, s/(S-1)), shape (S, N, 7)."""
        S, N = self.S, self.N
        tau = np.zeros((S, N, 1)) if S == 1 else np.broadcast_to(
            (np.arange(S) / (S - 1))[:, None, None], (S, N, 1))
        return np.concatenate([self.xyz, self.rgb, tau], axis=2)


@dataclass
class _Scene:
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    box_start: np.ndarray
    box_end: np.ndarray
    box_rot: np.ndarray
    box_trans: np.ndarray
    tri_part: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 0.0


def _build_scene(model: ArticulatedModel, q) -> _Scene:
    v0, e1, e2, lo, hi, start, end, rot, trans, tri_part = ([] for _ in range(10))
    n = 0
    for part in model.parts:
        T = part_pose(model, part.id, q)
        Tinv = T.inverse()
        for blo, bhi in part.boxes:
            tris = T.apply(box_triangles(blo, bhi))
            v0.append(tris[:, 0])
            e1.append(tris[:, 1] - tris[:, 0])
            e2.append(tris[:, 2] - tris[:, 0])
            lo.append(blo)
            hi.append(bhi)
            start.append(n)
            n += len(tris)
            end.append(n)
            rot.append(Tinv.rotation)
            trans.append(Tinv.translation)
            tri_part.extend([part.id] * len(tris))
    if n == 0:
        z3 = np.zeros((0, 3))
        return _Scene(z3, z3, z3, z3, z3, np.zeros(0, np.int64), np.zeros(0, np.int64),
                      np.zeros((0, 3, 3)), z3, np.zeros(0, np.int64))
    v0 = np.concatenate(v0)
    verts = np.concatenate([v0, v0 + np.concatenate(e1), v0 + np.concatenate(e2)])
    center = 0.5 * (verts.min(axis=0) + verts.max(axis=0))
    radius = float(np.linalg.norm(verts - center, axis=1).max()) * (1 + 1e-9) + 1e-9
    return _Scene(v0, np.concatenate(e1), np.concatenate(e2),
                  np.array(lo, float), np.array(hi, float),
                  np.array(start, np.int64), np.array(end, np.int64),
                  np.array(rot), np.array(trans), np.array(tri_part, np.int64), center, radius)


def _render_scene(model, scene: _Scene, camera: CameraPose, dirs=None) -> RenderOutput:
    H, W = camera.height, camera.width
    if dirs is None:
        dirs = camera.ray_directions()
    if len(scene.v0):
        t, tri = _raycast.cast_rays(camera.position, dirs, scene.v0, scene.e1, scene.e2,
                                    scene.box_lo, scene.box_hi, scene.box_start, scene.box_end,
                                    scene.box_rot, scene.box_trans, scene.center, scene.radius)
    else:
        t = np.full(len(dirs), np.inf)
        tri = np.full(len(dirs), -1, dtype=np.int64)
    hit = tri >= 0
    part = np.full(len(dirs), -1, dtype=np.int64)
    part[hit] = scene.tri_part[tri[hit]]
    colors = np.array([p.color for p in model.parts], float).reshape(-1, 3)
    sems = np.array([int(p.semantic) for p in model.parts], np.int64)
    rgb = np.zeros((len(dirs), 3))
    sem = np.full(len(dirs), -1, dtype=np.int64)
    rgb[hit] = colors[part[hit]]
    sem[hit] = sems[part[hit]]
    return RenderOutput(t.reshape(H, W), rgb.reshape(H, W, 3), sem.reshape(H, W), part.reshape(H, W))


def render(model: ArticulatedModel, q, camera: CameraPose) -> RenderOutput:
    """Ray-cast depth, colour and labels of the posed model from one camera."""
    if model.joints:
        model.check_config(q)
    return _render_scene(model, _build_scene(model, q), camera)


def backproject(out: RenderOutput, camera: CameraPose, state_index: int = 0,
                view_index: int = 0, dirs=None) -> PointCloudFrame:
    """Lift every valid pixel to the world point at its depth along the pixel ray."""
    valid = out.valid.reshape(-1)
    pix = np.flatnonzero(valid)
    dirs = (camera.ray_directions() if dirs is None else dirs)[pix]
    depth = out.depth.reshape(-1)[pix]
    xyz = camera.position[None, :] + depth[:, None] * dirs
    return PointCloudFrame(
        xyz,
        out.rgb.reshape(-1, 3)[pix],
        out.semantic.reshape(-1)[pix],
        out.instance.reshape(-1)[pix],
        state_index,
        np.full(len(pix), view_index, dtype=np.int64),
        pix.astype(np.int64),
    )


def fps_reference_start(xyz: np.ndarray) -> int:
    """Seed for FPS: the point farthest from the centroid (lowest index on ties)."""
    c = xyz.mean(axis=0)
    d = ((xyz - c) ** 2).sum(axis=1)
    return int(np.argmax(d))


def farthest_point_sampling(xyz: np.ndarray, m: int, first: int | None = None) -> np.ndarray:
    """Indices of ``m`` points chosen by exact greedy farthest point sampling."""
    xyz = np.ascontiguousarray(xyz, dtype=float)
    n = len(xyz)
    if m > n:
        raise ValueError(f"cannot sample {m} points from {n}")
    if m <= 0:
        return np.zeros(0, dtype=np.int64)
    if first is None:
        first = fps_reference_start(xyz)
    lo = xyz.min(axis=0)
    span = np.maximum(xyz.max(axis=0) - lo, 1e-12)
    k = int(np.clip(round((n / 24.0) ** (1.0 / 3.0)), 1, 48))
    cells = np.minimum((((xyz - lo) / span) * k).astype(np.int64), k - 1)
    cell_of = (cells[:, 0] * k + cells[:, 1]) * k + cells[:, 2]
    return _raycast.fps_grid(xyz, m, int(first), cell_of, k ** 3)


def _concat(views: Sequence[PointCloudFrame]) -> PointCloudFrame:
    views = [v for v in views if len(v)]
    if not views:
        raise ValueError("no points in any view")
    cat = lambda name: np.concatenate([getattr(v, name) for v in views])  # noqa: E731
    view = np.concatenate([v.view if v.view is not None else np.full(len(v), k, np.int64)
                           for k, v in enumerate(views)])
    pixel = np.concatenate([v.pixel if v.pixel is not None else np.arange(len(v), dtype=np.int64)
                            for v in views])
    return PointCloudFrame(cat("xyz"), cat("rgb"), cat("semantic"), cat("instance"),
                           views[0].state_index, view, pixel)


def fuse_and_sample(views: Sequence[PointCloudFrame], m: int) -> PointCloudFrame:
    """Concatenate single-view clouds and downsample to exactly ``m`` points by FPS.

    Points are ordered by (view index, pixel index) first, so the result does not
    depend on the order in which views are passed.
    """
    fused = _concat(views)
    if m > len(fused):
        raise ValueError(f"requested {m} points but the fused cloud has {len(fused)}")
    order = np.lexsort((fused.pixel, fused.view))
    fused = fused.take(order)
    idx = farthest_point_sampling(fused.xyz, m)
    return fused.take(np.sort(idx))


def scene_cameras(model: ArticulatedModel, states, n_views: int = DEFAULT_VIEWS,
                  resolution: int = DEFAULT_RESOLUTION) -> list[CameraPose]:
    radius = bounding_radius(model, states)
    r = RADIUS_FACTOR * radius
    return camera_positions(r, n_views, width=resolution, object_radius=radius)


def capture_state(model: ArticulatedModel, q, cameras: Sequence[CameraPose], m: int,
                  state_index: int = 0, rays=None) -> PointCloudFrame:
    """Render every view of one articulation state, fuse and downsample."""
    if model.joints:
        model.check_config(q)
    if rays is None:
        rays = [cam.ray_directions() for cam in cameras]
    scene = _build_scene(model, q)
    views = [backproject(_render_scene(model, scene, cam, d), cam, state_index, j, d)
             for j, (cam, d) in enumerate(zip(cameras, rays))]
    return fuse_and_sample(views, m)


def capture_sequence(model: ArticulatedModel, states, cameras: Sequence[CameraPose], m: int,
                     threads: int | None = None) -> list[PointCloudFrame]:
    """Fused, downsampled cloud per articulation state; output order follows ``states``."""
    threads = n_threads() if threads is None else threads
    rays = [cam.ray_directions() for cam in cameras]
    jobs = list(enumerate(states))

    def one(iq):
        return capture_state(model, iq[1], cameras, m, iq[0], rays)

    if threads <= 1:
        return [one(iq) for iq in jobs]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(one, jobs))
