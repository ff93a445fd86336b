import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from usocc.geometry import (Box, Pose, TrajectoryKind, frame_rays, make_trajectory,
                            normalize_to_unit_cube, rotation_x, rotation_z)


def random_rotation(seed):
    q = np.random.default_rng(seed).normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([[1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                     [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                     [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])


def test_pose_rejects_reflection():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_single_row_frame_sits_on_entry_face():
    traj = make_trajectory(TrajectoryKind.ROW, 1, Box())
    assert len(traj.frames) == 1
    pose = traj.frames[0]
    np.testing.assert_allclose(pose.rotation, np.eye(3))
    np.testing.assert_allclose(pose.translation, [0.5, 0.5, 0.0])


@pytest.mark.parametrize("kind, sign", [(TrajectoryKind.TILTED_PLUS_10, 1),
                                        (TrajectoryKind.TILTED_MINUS_10, -1)])
def test_tilted_frames_are_row_frames_rotated_ten_degrees(kind, sign):
    box = Box((0.1, 0.2, 0.0), (0.9, 0.7, 0.8))
    row = make_trajectory(TrajectoryKind.ROW, 5, box)
    tilted = make_trajectory(kind, 5, box)
    for a, b in zip(row.frames, tilted.frames):
        np.testing.assert_allclose(b.rotation, a.rotation @ rotation_x(sign * np.deg2rad(10)))
        np.testing.assert_allclose(b.translation, a.translation)
        angle = np.arccos(np.clip(a.beam_direction @ b.beam_direction, -1, 1))
        assert abs(angle - np.deg2rad(10)) < 1e-6


def test_column_frame_spacing():
    box = Box((0.1, 0.2, 0.0), (0.9, 0.8, 1.0))
    traj = make_trajectory(TrajectoryKind.COLUMN, 4, box)
    ys = np.array([f.translation[1] for f in traj.frames])
    np.testing.assert_allclose(np.diff(ys), (0.8 - 0.2) / 3)
    np.testing.assert_allclose([f.translation[0] for f in traj.frames], 0.5)


def test_column_sweep_is_row_turned_about_beam():
    traj = make_trajectory(TrajectoryKind.COLUMN, 2)
    np.testing.assert_allclose(traj.frames[0].rotation, rotation_z(np.pi / 2))
    np.testing.assert_allclose(traj.frames[0].beam_direction, [0, 0, 1], atol=1e-15)


@pytest.mark.parametrize("box", [Box((0.2, 0.2, 0.2), (0.2, 0.8, 0.8)),
                                 Box((0.5, 0.5, 0.5), (0.4, 0.9, 0.9))])
def test_zero_volume_extent_rejected(box):
    with pytest.raises(ValueError):
        make_trajectory(TrajectoryKind.ROW, 3, box)


def test_extent_outside_cube_rejected():
    with pytest.raises(ValueError):
        make_trajectory(TrajectoryKind.ROW, 3, Box((-0.1, 0, 0), (1, 1, 1)))


def test_frame_rays_identity():
    pose = Pose(np.eye(3), np.array([0.5, 0.5, 0.0]))
    (ray,) = frame_rays(pose, 1, 1.0)
    np.testing.assert_allclose(ray.origin, [0.5, 0.5, 0.0])
    np.testing.assert_allclose(ray.direction, [0, 0, 1])
    assert ray.max_depth == 1.0
    rays = frame_rays(pose, 3, 1.0)
    np.testing.assert_allclose(rays[1].origin, pose.translation)
    np.testing.assert_allclose(rays[0].origin + rays[2].origin, 2 * pose.translation)


@pytest.mark.parametrize("seed", range(5))
def test_frame_rays_follow_rotated_beam(seed):
    R = random_rotation(seed)
    pose = Pose(R, np.array([0.3, 0.4, 0.5]))
    expected = R @ np.array([0.0, 0.0, 1.0])
    for ray in frame_rays(pose, 7, 0.6, aperture=0.5):
        np.testing.assert_allclose(ray.direction, expected, atol=1e-12)
        assert abs(np.linalg.norm(ray.direction) - 1) < 1e-9
        assert ray.max_depth == 0.6


@pytest.mark.parametrize("seed", range(5))
def test_directions_stay_unit_under_composition(seed):
    p = Pose(random_rotation(seed), np.zeros(3))
    for k in range(5):
        p = p.compose(Pose(random_rotation(seed * 10 + k), np.ones(3)))
    assert abs(np.linalg.norm(p.beam_direction) - 1) < 1e-9


def test_normalize_identity_for_unit_cube_points():
    corners = np.array(np.meshgrid([0, 1], [0, 1], [0, 1])).reshape(3, -1).T.astype(float)
    out, tf = normalize_to_unit_cube(corners)
    assert tf.scale == 1.0
    np.testing.assert_allclose(tf.translation, 0.0)
    np.testing.assert_allclose(out, corners)


def test_normalize_symmetric_cube():
    corners = np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1])).reshape(3, -1).T.astype(float)
    out, tf = normalize_to_unit_cube(corners)
    assert tf.scale == 0.5
    np.testing.assert_allclose(tf.translation, [0.5, 0.5, 0.5])


def test_normalize_degenerate():
    with pytest.raises(ValueError):
        normalize_to_unit_cube(np.ones((4, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.just(3)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_normalize_round_trip(points):
    if np.ptp(points, axis=0).max() < 1e-6:
        return
    out, tf = normalize_to_unit_cube(points)
    assert out.min() >= 0.0 and out.max() <= 1.0
    np.testing.assert_allclose(tf.inverse(out), points, atol=1e-9 * max(1.0, np.abs(points).max()))
    # brute-force: longest side maps to exactly [0, 1]
    ext = np.ptp(out, axis=0)
    assert abs(ext.max() - 1.0) < 1e-12
