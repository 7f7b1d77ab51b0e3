"""Scene-motion estimation near the seed grasp: depth-frame container,
backprojection, lifting a 2D flow field to a 3D displacement field, and
averaging in-sphere displacements into a seed translation offset."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .se3 import Pose


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


@dataclass(frozen=True)
class DepthFrame:
    """Depth image in meters (0 or NaN marks invalid pixels) plus camera state."""

    depth: np.ndarray
    intrinsics: Intrinsics
    timestamp: float
    camera_pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError("depth shape does not match intrinsics")
        object.__setattr__(self, "depth", d)

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0)


def backproject_pixels(us: np.ndarray, vs: np.ndarray, depth: np.ndarray, frame: DepthFrame) -> np.ndarray:
    """Pixel coordinates + depths -> world-frame 3D points."""
    k = frame.intrinsics
    x = (us - k.cx) / k.fx * depth
    y = (vs - k.cy) / k.fy * depth
    cam = np.stack([x, y, depth], axis=-1)
    return frame.camera_pose.transform_points(cam.reshape(-1, 3)).reshape(cam.shape)


def _camera_point_grid(frame: DepthFrame) -> np.ndarray:
    k = frame.intrinsics
    vs, us = np.mgrid[0 : k.height, 0 : k.width].astype(np.float64)
    x = (us - k.cx) / k.fx * frame.depth
    y = (vs - k.cy) / k.fy * frame.depth
    return np.stack([x, y, frame.depth], axis=-1)


def frame_to_cloud(frame: DepthFrame, max_points: int | None = None, with_normals: bool = True) -> PointCloud:
    """Backproject a depth frame into a world-frame scene cloud (labels all 0).

    Normals are estimated from the depth image by crossing the image-space
    derivatives of the camera-frame point grid (a +/-2 px stencil for noise
    robustness) and oriented toward the camera. Pixels where the estimate is
    undefined (depth edges, borders, neighbors lost to sensor dropout) keep
    their point but carry a zero normal, meaning "unknown". Subsampling, when
    requested, takes an even deterministic stride.
    """
    grid = _camera_point_grid(frame)
    valid = frame.valid_mask()
    normals_grid = None
    if with_normals:
        du = np.full_like(grid, np.nan)
        dv = np.full_like(grid, np.nan)
        du[:, 2:-2] = (grid[:, 4:] - grid[:, :-4]) * 0.25
        dv[2:-2, :] = (grid[4:, :] - grid[:-4, :]) * 0.25
        n = np.cross(du, dv)
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = n / norm
        # orient toward the camera (camera sits at the origin of the grid frame)
        with np.errstate(invalid="ignore"):
            flip = np.sum(n * grid, axis=-1) > 0
        n[flip] = -n[flip]
        n[~np.isfinite(n).all(axis=-1)] = 0.0
        normals_grid = n

    cam_pts = grid[valid]
    world = frame.camera_pose.transform_points(cam_pts)
    normals = None
    if normals_grid is not None:
        normals = frame.camera_pose.transform_dirs(normals_grid[valid])
    if max_points is not None and len(world) > max_points:
        idx = np.unique(np.linspace(0, len(world) - 1, max_points).astype(int))
        world = world[idx]
        normals = normals[idx] if normals is not None else None
    return PointCloud(world, normals=normals, labels=np.zeros(len(world), dtype=np.uint8))


@dataclass(frozen=True)
class SceneFlow3D:
    """Per-point 3D displacement field between two frames, in the world frame."""

    points: np.ndarray  # base points at time t
    vectors: np.ndarray  # displacement t -> t+1
    frame_dt: float  # time between the two source frames

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        vec = np.asarray(self.vectors, dtype=np.float64).reshape(-1, 3)
        if len(pts) != len(vec):
            raise ValueError("points and vectors must have equal length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "vectors", vec)


@dataclass(frozen=True)
class FlowConfig:
    rho: float = 0.06  # sphere radius around the seed, meters
    min_points: int = 20

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")


class FlowProvider(ABC):
    """Produces a per-pixel 2D displacement field between consecutive frames.

    NaN entries mark pixels with no usable flow. Learned optical-flow backends
    plug in here; the simulator ships an exact ground-truth provider.
    """

    @abstractmethod
    def flow2d(self, prev: DepthFrame, next_frame: DepthFrame) -> np.ndarray:
        raise NotImplementedError


def lift_flow(flow: np.ndarray, prev: DepthFrame, next_frame: DepthFrame) -> SceneFlow3D:
    """Lift a 2D flow field to 3D world-frame displacements.

    For each valid pixel p with a valid correspondence p + flow(p), the vector
    is backproject(p + flow, next) - backproject(p, prev). Pixels with invalid
    depth or flow on either end are skipped.
    """
    if flow.shape[:2] != prev.depth.shape:
        raise ValueError("flow resolution does not match the depth frames")
    h, w = prev.depth.shape
    vs, us = np.mgrid[0:h, 0:w]
    ok = prev.valid_mask() & np.isfinite(flow).all(axis=-1)
    us, vs = us[ok], vs[ok]
    fl = flow[ok]
    ut = np.rint(us + fl[:, 0]).astype(int)
    vt = np.rint(vs + fl[:, 1]).astype(int)
    in_bounds = (ut >= 0) & (ut < w) & (vt >= 0) & (vt < h)
    us, vs, ut, vt, fl = us[in_bounds], vs[in_bounds], ut[in_bounds], vt[in_bounds], fl[in_bounds]
    next_valid = next_frame.valid_mask()[vt, ut]
    us, vs, ut, vt, fl = us[next_valid], vs[next_valid], ut[next_valid], vt[next_valid], fl[next_valid]

    base = backproject_pixels(
        us.astype(np.float64), vs.astype(np.float64), prev.depth[vs, us], prev
    )
    # use the sub-pixel corresponded location with the looked-up target depth
    target = backproject_pixels(
        us + fl[:, 0], vs + fl[:, 1], next_frame.depth[vt, ut], next_frame
    )
    return SceneFlow3D(base, target - base, frame_dt=next_frame.timestamp - prev.timestamp)


def seed_bias(flow3d: SceneFlow3D, seed: Pose, cfg: FlowConfig, dt: float) -> np.ndarray:
    """Mean in-sphere displacement around the seed, rescaled to one loop period.

    Returns the zero vector when fewer than cfg.min_points flow points fall
    within rho of the seed translation: a near-empty sphere would yield a
    noise-dominated mean.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if len(flow3d.points) == 0 or flow3d.frame_dt <= 0:
        return np.zeros(3)
    d2 = np.sum((flow3d.points - seed.translation) ** 2, axis=1)
    mask = d2 <= cfg.rho * cfg.rho
    if int(mask.sum()) < cfg.min_points:
        return np.zeros(3)
    mean = flow3d.vectors[mask].mean(axis=0)
    return mean / flow3d.frame_dt * dt
