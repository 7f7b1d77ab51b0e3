import math

import numpy as np
import pytest

from grasptrack.cloud import (
    AugmentConfig,
    CropBox,
    PointCloud,
    crop_to_grasp_frame,
    gripper_cloud,
    inject_noise,
    merge_labeled,
    normal_dropout,
    read_ply,
    write_ply,
    _sample_box_surface,
)
from grasptrack.gripper import GripperModel
from grasptrack.se3 import Pose, rot_z


def make_cloud(n, seed=0, normals=False, labels=None):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.2, 0.2, size=(n, 3))
    nrm = None
    if normals:
        nrm = rng.normal(size=(n, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    lab = None if labels is None else np.full(n, labels, dtype=np.uint8)
    return PointCloud(pts, normals=nrm, labels=lab)


# --- crop_to_grasp_frame ---


def test_crop_keeps_point_at_grasp_origin():
    grasp = Pose.from_translation(0.3, -0.1, 0.2)
    scene = PointCloud(np.array([[0.3, -0.1, 0.2]]))
    out = crop_to_grasp_frame(scene, grasp, CropBox())
    np.testing.assert_allclose(out.points, [[0, 0, 0]], atol=1e-12)


@pytest.mark.parametrize(
    "local_point,kept",
    [
        ((0.099, 0.0, 0.0), True),
        ((0.11, 0.0, 0.0), False),  # |x| > 0.10
        ((0.0, 0.051, 0.0), False),  # |y| > 0.05
        ((0.0, 0.0, 0.04), False),  # z > 0.03
        ((0.0, 0.0, -0.11), False),  # z < -0.10
        ((0.0, 0.0, 0.029), True),
    ],
)
def test_crop_default_box_bounds(local_point, kept):
    grasp = Pose(rot_z(0.7), np.array([0.1, 0.2, 0.3]))
    world = grasp.transform_points(np.array([local_point]))
    out = crop_to_grasp_frame(PointCloud(world), grasp, CropBox())
    assert (len(out) == 1) == kept


def test_crop_carries_normals_and_labels_rotated():
    grasp = Pose(rot_z(math.pi / 2), np.zeros(3))
    scene = PointCloud(
        np.array([[0.0, 0.01, 0.0]]),
        normals=np.array([[0.0, 1.0, 0.0]]),
        labels=np.array([0], dtype=np.uint8),
    )
    out = crop_to_grasp_frame(scene, grasp, CropBox())
    # world +y maps to grasp-frame +x under a 90 degree grasp yaw
    np.testing.assert_allclose(out.points, [[0.01, 0, 0]], atol=1e-15)
    np.testing.assert_allclose(out.normals, [[1.0, 0.0, 0.0]], atol=1e-15)
    assert out.labels.tolist() == [0]


def test_crop_idempotent_and_bounded():
    scene = make_cloud(5000, seed=1, normals=True, labels=0)
    grasp = Pose(rot_z(0.3), np.array([0.05, 0.0, 0.02]))
    box = CropBox()
    once = crop_to_grasp_frame(scene, grasp, box)
    assert len(once) <= len(scene)
    assert np.all(np.abs(once.points[:, 0]) <= box.x_half)
    assert np.all(np.abs(once.points[:, 1]) <= box.y_half)
    assert np.all((once.points[:, 2] >= box.z_min) & (once.points[:, 2] <= box.z_max))
    twice = crop_to_grasp_frame(once, Pose.identity(), box)
    np.testing.assert_array_equal(twice.points, once.points)


def test_crop_empty_result_is_legal():
    scene = PointCloud(np.array([[5.0, 5.0, 5.0]]))
    out = crop_to_grasp_frame(scene, Pose.identity(), CropBox())
    assert len(out) == 0


# --- gripper_cloud ---


def test_box_surface_degenerate_sampling_hits_face_centroids():
    center = np.array([1.0, 2.0, 3.0])
    half = np.array([0.01, 0.01, 0.01])
    pts, nrm = _sample_box_surface(center, half, 6)
    expected = center + 0.01 * np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
    )
    np.testing.assert_allclose(np.sort(pts, axis=0), np.sort(expected, axis=0), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0)


def test_gripper_cloud_counts_and_labels():
    gc = gripper_cloud(32)
    assert len(gc) == 32 * 3  # two fingers + palm
    assert np.all(gc.labels == 1)
    assert gc.normals is not None


def test_gripper_cloud_deterministic():
    a = gripper_cloud(17)
    b = gripper_cloud(17)
    np.testing.assert_array_equal(a.points, b.points)


def test_gripper_cloud_points_on_link_surfaces():
    model = GripperModel()
    gc = gripper_cloud(64, model)
    boxes = model.link_boxes()
    on_surface = np.zeros(len(gc), dtype=bool)
    for center, half in boxes:
        d = np.abs(gc.points - center) - half
        on_surface |= (np.abs(d.max(axis=1)) < 1e-9) & np.all(d <= 1e-9, axis=1)
    assert on_surface.all()


def test_gripper_cloud_rejects_nonpositive_count():
    with pytest.raises(ValueError):
        gripper_cloud(0)


# --- merge_labeled ---


def test_merge_empty_scene_yields_gripper():
    gc = gripper_cloud(8)
    merged = merge_labeled(PointCloud.empty(), gc)
    np.testing.assert_array_equal(merged.points, gc.points)
    assert np.all(merged.labels == 1)


def test_merge_counts_and_histogram():
    scene = make_cloud(10, labels=0)
    grip = make_cloud(7, seed=3, labels=1)
    merged = merge_labeled(scene, grip)
    assert len(merged) == 17
    assert merged.labels is not None
    assert (merged.labels[:10] == 0).all() and (merged.labels[10:] == 1).all()
    assert np.bincount(merged.labels, minlength=2).tolist() == [10, 7]


def test_merge_labels_present_even_when_inputs_unlabeled():
    merged = merge_labeled(make_cloud(4), make_cloud(5, seed=2))
    assert merged.labels is not None


def test_merge_rejects_conflicting_conventions():
    with pytest.raises(ValueError):
        merge_labeled(make_cloud(3, labels=1), make_cloud(3, labels=1))
    with pytest.raises(ValueError):
        merge_labeled(make_cloud(3, labels=0), make_cloud(3, labels=0))


# --- inject_noise ---


def test_inject_noise_zero_sigma_identical():
    c = make_cloud(100, normals=True, labels=0)
    out = inject_noise(c, 0.0, rng_seed=1)
    np.testing.assert_array_equal(out.points, c.points)


def test_inject_noise_statistics():
    c = PointCloud(np.zeros((100_000, 3)))
    out = inject_noise(c, 0.002, rng_seed=7)
    std = out.points.std(axis=0)
    mean = out.points.mean(axis=0)
    assert np.all(std >= 0.0019) and np.all(std <= 0.0021)
    assert np.all(np.abs(mean) <= 1e-4)


def test_inject_noise_deterministic_and_preserving():
    c = make_cloud(50, normals=True, labels=0)
    a = inject_noise(c, 0.002, rng_seed=42)
    b = inject_noise(c, 0.002, rng_seed=42)
    np.testing.assert_array_equal(a.points, b.points)
    assert len(a) == len(c)
    np.testing.assert_array_equal(a.normals, c.normals)
    np.testing.assert_array_equal(a.labels, c.labels)


# --- normal_dropout ---


def angled_cloud(n, angle_deg):
    """Cloud whose normals all sit at angle_deg from the +z view direction."""
    a = math.radians(angle_deg)
    normals = np.tile([math.sin(a), 0.0, math.cos(a)], (n, 1))
    return PointCloud(np.zeros((n, 3)), normals=normals)


def test_dropout_outside_band_unchanged():
    c = angled_cloud(1000, 10.0)
    out = normal_dropout(c, np.array([0, 0, 1.0]), AugmentConfig(), rng_seed=0)
    assert len(out) == len(c)


def test_dropout_in_band_keeps_expected_fraction():
    c = angled_cloud(100_000, 85.0)
    out = normal_dropout(c, np.array([0, 0, 1.0]), AugmentConfig(), rng_seed=11)
    kept = len(out) / len(c)
    assert 0.28 <= kept <= 0.32


def test_dropout_orientation_insensitive():
    # A backfacing normal at 95 degrees reads as an 85 degree grazing surface.
    a = math.radians(95.0)
    c = PointCloud(np.zeros((20_000, 3)), normals=np.tile([math.sin(a), 0, math.cos(a)], (20_000, 1)))
    out = normal_dropout(c, np.array([0, 0, 1.0]), AugmentConfig(), rng_seed=3)
    assert 0.25 <= len(out) / len(c) <= 0.35


def test_dropout_zero_prob_unchanged():
    c = angled_cloud(500, 85.0)
    cfg = AugmentConfig(drop_prob=0.0)
    out = normal_dropout(c, np.array([0, 0, 1.0]), cfg, rng_seed=0)
    assert len(out) == len(c)


def test_dropout_requires_normals():
    with pytest.raises(ValueError, match="requires normals"):
        normal_dropout(make_cloud(10), np.array([0, 0, 1.0]), AugmentConfig(), rng_seed=0)


def test_dropout_deterministic():
    c = angled_cloud(1000, 85.0)
    a = normal_dropout(c, np.array([0, 0, 1.0]), AugmentConfig(), rng_seed=5)
    b = normal_dropout(c, np.array([0, 0, 1.0]), AugmentConfig(), rng_seed=5)
    np.testing.assert_array_equal(a.points, b.points)


# --- PLY round trip ---


def test_ply_round_trip_full(tmp_path):
    c = make_cloud(123, normals=True, labels=0)
    path = tmp_path / "cloud.ply"
    write_ply(c, path)
    back = read_ply(path)
    np.testing.assert_allclose(back.points, c.points, atol=1e-6)
    np.testing.assert_allclose(back.normals, c.normals, atol=1e-6)
    np.testing.assert_array_equal(back.labels, c.labels)


def test_ply_round_trip_bare_points(tmp_path):
    c = make_cloud(7)
    path = tmp_path / "bare.ply"
    write_ply(c, path)
    back = read_ply(path)
    assert back.normals is None and back.labels is None
    np.testing.assert_allclose(back.points, c.points, atol=1e-6)
