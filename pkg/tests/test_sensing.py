import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import greedy_fps

from articanon.kinematics import ArticulatedModel
from articanon.scenegen import Part, SemanticClass, build_template
from articanon.sensing import (CameraPose, PointCloudFrame, SequenceSample, backproject, camera_positions,
                               capture_sequence, farthest_point_sampling, fibonacci_angles,
                               fps_reference_start, fuse_and_sample, render, scene_cameras,
                               sphere_position)


def unit_box():
    return ArticulatedModel([Part(0, SemanticClass.Body, [((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))],
                                  (0.2, 0.4, 0.6))], [])


def frame(xyz, view=None):
    xyz = np.asarray(xyz, float)
    n = len(xyz)
    return PointCloudFrame(xyz, np.zeros((n, 3)), np.zeros(n, int), np.arange(n), 0,
                           None if view is None else np.full(n, view), np.arange(n))


# camera placement

def test_pole_position():
    for phi in (0.0, 1.3, 4.0):
        assert np.allclose(sphere_position(2.0, 0.0, phi), [0, 0, 2.0], atol=1e-12)


def test_positions_on_sphere():
    for cam in camera_positions(3.5, 18):
        assert abs(np.linalg.norm(cam.position) - 3.5) <= 1e-9
        assert np.allclose(cam.look_at, 0)


def test_eighteen_views_near_uniform():
    angles = fibonacci_angles(18)
    dirs = np.array([sphere_position(1.0, t, p) for t, p in angles])
    cos = np.clip(dirs @ dirs.T, -1, 1)
    np.fill_diagonal(cos, -1)
    nearest = np.arccos(cos.max(axis=1))
    assert nearest.max() <= 2 * nearest.min()


def test_camera_basis_orthonormal():
    for cam in camera_positions(2.0, 10):
        B = np.stack(cam.basis())
        assert np.allclose(B @ B.T, np.eye(3), atol=1e-12)
    with pytest.raises(ValueError):
        CameraPose(np.zeros(3))


# rendering

def test_center_pixel_depth_of_unit_box():
    r = 3.0
    cam = CameraPose([0, 0, r], focal=60.0, width=65, height=65)
    out = render(unit_box(), [], cam)
    assert abs(out.depth[32, 32] - (r - 0.5)) <= 1e-6


def test_empty_model_all_invalid():
    empty = ArticulatedModel([], [])
    out = render(empty, [], CameraPose([0, 0, 2.0], width=16, height=16))
    assert not out.valid.any()
    assert len(backproject(out, CameraPose([0, 0, 2.0], width=16, height=16))) == 0


def test_labels_match_containing_box():
    m = build_template("cabinet_door_drawer")
    q = [1.0, 0.05]
    cams = scene_cameras(m, [q], 4, 48)
    from articanon.kinematics import part_pose
    for cam in cams:
        out = render(m, q, cam)
        pts = backproject(out, cam)
        for x, p in zip(pts.xyz, pts.instance):
            local = part_pose(m, p, q).inverse().apply(x)
            inside = [np.all((local >= np.array(lo) - 1e-6) & (local <= np.array(hi) + 1e-6))
                      for lo, hi in m.parts[p].boxes]
            assert any(inside)


def test_backproject_center_pixel():
    cam = CameraPose([0, 0, 3.0], focal=60.0, width=65, height=65)
    out = render(unit_box(), [], cam)
    pts = backproject(out, cam)
    k = np.flatnonzero(pts.pixel == 32 * 65 + 32)[0]
    fwd = cam.basis()[2]
    assert np.allclose(pts.xyz[k], cam.position + out.depth[32, 32] * fwd, atol=1e-12)


def test_reprojection_lands_on_source_pixel():
    m = build_template("laptop_lid")
    q = [0.9]
    cam = scene_cameras(m, [q], 5, 40)[2]
    pts = backproject(render(m, q, cam), cam)
    uv = cam.project(pts.xyz)
    src = np.stack([pts.pixel % cam.width, pts.pixel // cam.width], axis=1)
    assert np.max(np.abs(uv - src)) <= 0.5


def test_render_rejects_out_of_limit_state():
    m = build_template("cabinet_door")
    with pytest.raises(ValueError):
        render(m, [2.0], CameraPose([0, 0, 2.0], width=8, height=8))


# fusion and sampling

def test_identity_sampling_of_single_view():
    rng = np.random.default_rng(0)
    f = frame(rng.normal(size=(30, 3)), view=0)
    out = fuse_and_sample([f], 30)
    assert sorted(map(tuple, out.xyz)) == sorted(map(tuple, f.xyz))


def test_collinear_extremes():
    xs = np.array([0.3, -1.0, 0.1, 2.0, 0.7])
    out = fuse_and_sample([frame(np.c_[xs, np.zeros(5), np.zeros(5)])], 2)
    assert sorted(out.xyz[:, 0]) == [-1.0, 2.0]


def test_matches_greedy_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pts = rng.uniform(size=(24, 3))
        got = set(farthest_point_sampling(pts, 8).tolist())
        assert got == set(greedy_fps(pts, 8, fps_reference_start(pts)))


def test_grid_fps_exact_on_large_cloud():
    rng = np.random.default_rng(2)
    pts = np.concatenate([rng.normal(size=(300, 3)), rng.uniform(-3, 3, size=(300, 3))])
    got = farthest_point_sampling(pts, 40).tolist()
    assert got == greedy_fps(pts, 40, fps_reference_start(pts))


def test_fps_ties_to_lowest_index():
    grid = np.array([[x, y, 0.0] for x in range(3) for y in range(3)], float)
    assert farthest_point_sampling(grid, 4, first=4).tolist() == greedy_fps(grid, 4, 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60))
def test_fps_properties(seed, n):
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    m = n // 2
    idx = farthest_point_sampling(pts, m)
    assert len(set(idx.tolist())) == m
    assert farthest_point_sampling(pts, m + 1)[:m].tolist() == idx.tolist()

    def min_gap(sel):
        d = np.sqrt(((pts[sel, None] - pts[None, sel]) ** 2).sum(-1))
        return d[np.triu_indices(len(sel), 1)].min()

    if m >= 2:
        assert min_gap(farthest_point_sampling(pts, m + 1)) <= min_gap(idx) + 1e-15


def test_view_order_does_not_matter():
    rng = np.random.default_rng(4)
    views = [frame(rng.normal(size=(20, 3)), view=k) for k in range(4)]
    a = fuse_and_sample(views, 15)
    b = fuse_and_sample(views[::-1], 15)
    assert np.array_equal(a.xyz, b.xyz)


def test_oversampling_errors():
    with pytest.raises(ValueError):
        fuse_and_sample([frame(np.zeros((3, 3)))], 4)
    with pytest.raises(ValueError):
        fuse_and_sample([frame(np.zeros((0, 3)))], 0)


def test_threaded_capture_matches_serial():
    m = build_template("cabinet_drawer")
    states = [np.array([0.0]), np.array([0.1])]
    cams = scene_cameras(m, states, 6, 32)
    a = capture_sequence(m, states, cams, 200, threads=1)
    b = capture_sequence(m, states, cams, 200, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.xyz, y.xyz) and np.array_equal(x.instance, y.instance)


def test_sequence_features():
    xyz = np.zeros((3, 4, 3))
    s = SequenceSample(xyz, np.ones_like(xyz), np.zeros((3, 4), int), np.zeros((3, 4), int))
    f = s.features()
    assert f.shape == (3, 4, 7)
    assert np.allclose(f[:, 0, 6], [0, 0.5, 1.0])
    with pytest.raises(ValueError):
        SequenceSample.from_frames([frame(np.zeros((3, 3))), frame(np.zeros((4, 3)))])


def test_fibonacci_count():
    assert len(fibonacci_angles(18)) == 18
    assert all(0 <= t <= math.pi for t, _ in fibonacci_angles(7))
