import numpy as np
import pytest

from grasptrack.flow import (
    DepthFrame,
    FlowConfig,
    Intrinsics,
    SceneFlow3D,
    frame_to_cloud,
    lift_flow,
    seed_bias,
)
from grasptrack.se3 import Pose

K = Intrinsics(fx=100.0, fy=100.0, cx=15.5, cy=11.5, width=32, height=24)


def flat_frame(depth_value, t=0.0, holes=()):
    depth = np.full((K.height, K.width), depth_value)
    for v, u in holes:
        depth[v, u] = np.nan
    return DepthFrame(depth, K, timestamp=t)


def test_zero_flow_identical_depth_gives_zero_vectors():
    prev = flat_frame(0.5, t=0.0)
    nxt = flat_frame(0.5, t=0.05)
    flow = np.zeros((K.height, K.width, 2))
    sf = lift_flow(flow, prev, nxt)
    assert len(sf.points) == K.height * K.width
    np.testing.assert_allclose(sf.vectors, 0.0, atol=1e-12)
    assert sf.frame_dt == pytest.approx(0.05)


def test_one_pixel_flow_backprojects_to_5mm():
    prev = flat_frame(0.5, t=0.0)
    nxt = flat_frame(0.5, t=0.05)
    flow = np.zeros((K.height, K.width, 2))
    flow[:, :, 0] = 1.0
    sf = lift_flow(flow, prev, nxt)
    expected = 0.5 / K.fx  # one pixel at 0.5 m with fx = 100 -> 5 mm
    np.testing.assert_allclose(sf.vectors[:, 0], expected, atol=1e-9)
    np.testing.assert_allclose(sf.vectors[:, 1:], 0.0, atol=1e-9)


def test_invalid_depth_pixels_are_skipped():
    prev = flat_frame(0.5, holes=[(5, 5), (6, 6)])
    nxt = flat_frame(0.5, t=0.05, holes=[(0, 0)])
    flow = np.zeros((K.height, K.width, 2))
    sf = lift_flow(flow, prev, nxt)
    # two invalid source pixels plus one invalid target pixel
    assert len(sf.points) == K.height * K.width - 3


def test_flow_out_of_bounds_correspondence_skipped():
    prev = flat_frame(0.5)
    nxt = flat_frame(0.5, t=0.05)
    flow = np.zeros((K.height, K.width, 2))
    flow[:, -1, 0] = 5.0  # last column flows off the image
    sf = lift_flow(flow, prev, nxt)
    assert len(sf.points) == K.height * (K.width - 1)


def test_lift_rejects_resolution_mismatch():
    prev = flat_frame(0.5)
    with pytest.raises(ValueError):
        lift_flow(np.zeros((4, 4, 2)), prev, prev)


def test_seed_bias_empty_sphere_returns_zero():
    sf = SceneFlow3D(np.array([[10.0, 0, 0]]), np.array([[1.0, 0, 0]]), frame_dt=0.05)
    bias = seed_bias(sf, Pose.identity(), FlowConfig(), dt=0.05)
    np.testing.assert_array_equal(bias, np.zeros(3))


def test_seed_bias_uniform_field():
    pts = np.random.default_rng(0).uniform(-0.02, 0.02, (100, 3))
    vec = np.tile([0.005, 0.0, 0.0], (100, 1))
    sf = SceneFlow3D(pts, vec, frame_dt=0.05)
    bias = seed_bias(sf, Pose.identity(), FlowConfig(), dt=0.05)
    np.testing.assert_allclose(bias, [0.005, 0, 0], atol=1e-12)


def test_seed_bias_is_arithmetic_mean():
    pts = np.zeros((40, 3))
    vec = np.concatenate([np.tile([0.004, 0, 0], (20, 1)), np.tile([0.006, 0, 0], (20, 1))])
    sf = SceneFlow3D(pts, vec, frame_dt=0.05)
    bias = seed_bias(sf, Pose.identity(), FlowConfig(), dt=0.05)
    np.testing.assert_allclose(bias, [0.005, 0, 0], atol=1e-15)


def test_seed_bias_rescales_to_loop_period():
    pts = np.zeros((40, 3))
    vec = np.tile([0.01, 0, 0], (40, 1))
    sf = SceneFlow3D(pts, vec, frame_dt=0.1)  # 10 cm/s over a 0.1 s frame gap
    bias = seed_bias(sf, Pose.identity(), FlowConfig(), dt=0.05)
    np.testing.assert_allclose(bias, [0.005, 0, 0], atol=1e-15)


def test_seed_bias_ignores_points_outside_sphere():
    rng = np.random.default_rng(1)
    inside_pts = rng.uniform(-0.01, 0.01, (50, 3))
    inside_vec = np.tile([0.002, 0, 0], (50, 1))
    outside_pts = np.tile([1.0, 1.0, 1.0], (50, 1))
    outside_vec = rng.uniform(-5, 5, (50, 3))
    sf = SceneFlow3D(
        np.concatenate([inside_pts, outside_pts]),
        np.concatenate([inside_vec, outside_vec]),
        frame_dt=0.05,
    )
    bias = seed_bias(sf, Pose.identity(), FlowConfig(), dt=0.05)
    np.testing.assert_allclose(bias, [0.002, 0, 0], atol=1e-12)


def test_seed_bias_min_points_guard():
    pts = np.zeros((5, 3))
    vec = np.tile([0.01, 0, 0], (5, 1))
    sf = SceneFlow3D(pts, vec, frame_dt=0.05)
    assert np.all(seed_bias(sf, Pose.identity(), FlowConfig(min_points=20), 0.05) == 0.0)
    assert seed_bias(sf, Pose.identity(), FlowConfig(min_points=5), 0.05)[0] > 0


def test_frame_to_cloud_flat_plane():
    frame = flat_frame(0.5)
    cloud = frame_to_cloud(frame)
    assert len(cloud) > 0
    np.testing.assert_allclose(cloud.points[:, 2], 0.5, atol=1e-12)
    # outward normals of a fronto-parallel plane face the camera (-z);
    # border pixels carry the zero "unknown" normal
    estimated = np.linalg.norm(cloud.normals, axis=1) > 0.5
    assert estimated.sum() > 0.5 * len(cloud)
    np.testing.assert_allclose(cloud.normals[estimated, 2], -1.0, atol=1e-9)
    assert np.all(cloud.labels == 0)


def test_frame_to_cloud_respects_camera_pose():
    pose = Pose.from_translation(1.0, 2.0, 3.0)
    frame = DepthFrame(np.full((K.height, K.width), 0.5), K, timestamp=0.0, camera_pose=pose)
    cloud = frame_to_cloud(frame, with_normals=False)
    np.testing.assert_allclose(cloud.points[:, 2], 3.5, atol=1e-12)


def test_frame_to_cloud_subsampling_deterministic():
    frame = flat_frame(0.5)
    a = frame_to_cloud(frame, max_points=100)
    b = frame_to_cloud(frame, max_points=100)
    assert len(a) <= 100
    np.testing.assert_array_equal(a.points, b.points)
