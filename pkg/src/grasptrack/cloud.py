"""Point-cloud container and the cloud transformations used by the pipeline:
grasp-frame cropping, gripper-cloud synthesis, scene/gripper labeling,
Gaussian noise injection, shallow-angle normal dropout, and PLY persistence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gripper import GripperModel
from .se3 import Pose

SCENE_LABEL = 0
GRIPPER_LABEL = 1


@dataclass(frozen=True)
class PointCloud:
    """Points in meters, with optional unit normals and binary source labels
    (0 = scene, 1 = gripper)."""

    points: np.ndarray
    normals: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(pts):
                raise ValueError("normals length must match points")
            object.__setattr__(self, "normals", n)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
            if len(lab) != len(pts):
                raise ValueError("labels length must match points")
            if lab.size and lab.max() > 1:
                raise ValueError("labels must be 0 (scene) or 1 (gripper)")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls, with_normals: bool = False, with_labels: bool = False) -> "PointCloud":
        return cls(
            np.zeros((0, 3)),
            normals=np.zeros((0, 3)) if with_normals else None,
            labels=np.zeros(0, dtype=np.uint8) if with_labels else None,
        )

    def select(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.points[mask],
            normals=self.normals[mask] if self.normals is not None else None,
            labels=self.labels[mask] if self.labels is not None else None,
        )


@dataclass(frozen=True)
class CropBox:
    """Rectangular prism in the grasp frame used to segment the scene cloud."""

    x_half: float = 0.10
    y_half: float = 0.05
    z_min: float = -0.10
    z_max: float = 0.03

    def __post_init__(self):
        if self.x_half <= 0 or self.y_half <= 0 or self.z_min >= self.z_max:
            raise ValueError("degenerate crop box")

    def contains(self, points: np.ndarray) -> np.ndarray:
        x, y, z = points[:, 0], points[:, 1], points[:, 2]
        return (
            (np.abs(x) <= self.x_half)
            & (np.abs(y) <= self.y_half)
            & (z >= self.z_min)
            & (z <= self.z_max)
        )


@dataclass(frozen=True)
class AugmentConfig:
    noise_sigma: float = 0.002
    shallow_angle_min: float = math.radians(80.0)
    shallow_angle_max: float = math.radians(90.0)
    drop_prob: float = 0.7

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        if self.shallow_angle_min >= self.shallow_angle_max:
            raise ValueError("shallow angle band is empty")


def crop_to_grasp_frame(scene: PointCloud, grasp: Pose, box: CropBox) -> PointCloud:
    """Express the scene in the grasp frame and keep only points inside the box.

    Normals are rotated into the grasp frame; labels carry through. An empty
    result is legal and means there is no geometry near the grasp.
    """
    inv = grasp.inverse()
    local = inv.transform_points(scene.points)
    mask = box.contains(local)
    return PointCloud(
        local[mask],
        normals=inv.transform_dirs(scene.normals)[mask] if scene.normals is not None else None,
        labels=scene.labels[mask] if scene.labels is not None else None,
    )


def _face_grid(k: int, du: float, dv: float) -> np.ndarray:
    """k deterministic sample positions on a du x dv rectangle, centered cells.

    One sample lands exactly on the face centroid.
    """
    if k <= 0:
        return np.zeros((0, 2))
    nu = max(1, round(math.sqrt(k * du / dv))) if dv > 0 else k
    nv = math.ceil(k / nu)
    us = (np.arange(nu) + 0.5) / nu * du - du / 2.0
    vs = (np.arange(nv) + 0.5) / nv * dv - dv / 2.0
    grid = np.stack(np.meshgrid(us, vs, indexing="ij"), axis=-1).reshape(-1, 2)
    return grid[:k]


def _sample_box_surface(center: np.ndarray, half: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic stratified samples on a box surface: points and outward normals.

    Samples are allocated across the six faces proportionally to face area
    (largest remainder), then placed on a centered grid within each face.
    """
    hx, hy, hz = half
    # (axis, sign, extent_u axis, extent_v axis)
    faces = [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)]
    dims = {0: (hy, hz), 1: (hx, hz), 2: (hx, hy)}
    areas = np.array([4.0 * dims[ax][0] * dims[ax][1] for ax, _ in faces])
    quota = areas / areas.sum() * n
    counts = np.floor(quota).astype(int)
    remainder = quota - counts
    for i in np.argsort(-remainder)[: n - counts.sum()]:
        counts[i] += 1

    pts, nrm = [], []
    for (axis, sign), k in zip(faces, counts):
        if k == 0:
            continue
        u_ax, v_ax = [a for a in range(3) if a != axis]
        grid = _face_grid(int(k), 2.0 * half[u_ax], 2.0 * half[v_ax])
        p = np.zeros((len(grid), 3))
        p[:, axis] = sign * half[axis]
        p[:, u_ax] = grid[:, 0]
        p[:, v_ax] = grid[:, 1]
        normal = np.zeros(3)
        normal[axis] = sign
        pts.append(p + center)
        nrm.append(np.tile(normal, (len(grid), 1)))
    return np.concatenate(pts), np.concatenate(nrm)


def gripper_cloud(points_per_link: int, model: GripperModel | None = None) -> PointCloud:
    """Deterministic surface samples of the gripper links in the grasp frame,
    all labeled 1."""
    if points_per_link <= 0:
        raise ValueError("points_per_link must be positive")
    model = model or GripperModel()
    pts, nrm = [], []
    for center, half in model.link_boxes():
        p, n = _sample_box_surface(center, half, points_per_link)
        pts.append(p)
        nrm.append(n)
    points = np.concatenate(pts)
    return PointCloud(
        points,
        normals=np.concatenate(nrm),
        labels=np.full(len(points), GRIPPER_LABEL, dtype=np.uint8),
    )


def merge_labeled(scene: PointCloud, gripper: PointCloud) -> PointCloud:
    """Concatenate scene then gripper, with labels present on every output point.

    Scene labels, when present, must all be 0 and gripper labels all 1;
    anything else means the caller mixed up conventions.
    """
    if scene.labels is not None and np.any(scene.labels != SCENE_LABEL):
        raise ValueError("scene cloud carries gripper-labeled points")
    if gripper.labels is not None and np.any(gripper.labels != GRIPPER_LABEL):
        raise ValueError("gripper cloud carries scene-labeled points")
    points = np.concatenate([scene.points, gripper.points])
    labels = np.concatenate(
        [
            np.zeros(len(scene), dtype=np.uint8),
            np.ones(len(gripper), dtype=np.uint8),
        ]
    )
    normals = None
    if scene.normals is not None and gripper.normals is not None:
        normals = np.concatenate([scene.normals, gripper.normals])
    return PointCloud(points, normals=normals, labels=labels)


def inject_noise(cloud: PointCloud, sigma: float, rng_seed: int) -> PointCloud:
    """Perturb each coordinate with independent zero-mean Gaussian noise."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0 or len(cloud) == 0:
        return cloud
    rng = np.random.default_rng(rng_seed)
    return PointCloud(
        cloud.points + rng.normal(scale=sigma, size=cloud.points.shape),
        normals=cloud.normals,
        labels=cloud.labels,
    )


def normal_dropout(
    cloud: PointCloud, view_dir: np.ndarray, cfg: AugmentConfig, rng_seed: int
) -> PointCloud:
    """Drop points whose surface sits at a shallow angle to the viewing ray.

    The angle is measured between the normal line and the view direction,
    ignoring normal orientation, so a grazing surface reads just under 90
    degrees whether its normal faces the camera or not. Band bounds are
    inclusive; in-band points are dropped independently with cfg.drop_prob.
    """
    if cloud.normals is None:
        raise ValueError("normal dropout augmentation requires normals")
    view = np.asarray(view_dir, dtype=np.float64)
    view = view / np.linalg.norm(view)
    cos = np.abs(cloud.normals @ view)
    angle = np.arccos(np.clip(cos, -1.0, 1.0))
    in_band = (angle >= cfg.shallow_angle_min) & (angle <= cfg.shallow_angle_max)
    rng = np.random.default_rng(rng_seed)
    dropped = in_band & (rng.random(len(cloud)) < cfg.drop_prob)
    return cloud.select(~dropped)


# --- PLY persistence (binary little-endian) ---


def write_ply(cloud: PointCloud, path) -> None:
    props = ["property float x", "property float y", "property float z"]
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if cloud.normals is not None:
        props += ["property float nx", "property float ny", "property float nz"]
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    if cloud.labels is not None:
        props.append("property uchar label")
        fields.append(("label", "u1"))
    header = "\n".join(
        ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}"]
        + props
        + ["end_header", ""]
    )
    data = np.zeros(len(cloud), dtype=fields)
    data["x"], data["y"], data["z"] = cloud.points.T.astype(np.float32)
    if cloud.normals is not None:
        data["nx"], data["ny"], data["nz"] = cloud.normals.T.astype(np.float32)
    if cloud.labels is not None:
        data["label"] = cloud.labels
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(data.tobytes())


def read_ply(path) -> PointCloud:
    with open(path, "rb") as f:
        raw = f.read()
    end = raw.index(b"end_header\n") + len(b"end_header\n")
    header = raw[:end].decode("ascii").splitlines()
    if header[1] != "format binary_little_endian 1.0":
        raise ValueError("only binary little-endian PLY is supported")
    count = 0
    fields: list[tuple[str, str]] = []
    for line in header:
        if line.startswith("element vertex"):
            count = int(line.split()[-1])
        elif line.startswith("property"):
            _, ptype, name = line.split()
            fields.append((name, "u1" if ptype == "uchar" else "<f4"))
    data = np.frombuffer(raw[end:], dtype=fields, count=count)
    names = [n for n, _ in fields]
    points = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(np.float64)
    normals = None
    if {"nx", "ny", "nz"} <= set(names):
        normals = np.stack([data["nx"], data["ny"], data["nz"]], axis=1).astype(np.float64)
    labels = data["label"].copy() if "label" in names else None
    return PointCloud(points, normals=normals, labels=labels)
