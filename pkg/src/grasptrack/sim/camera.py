"""Raycast wrist depth camera over the analytic scene, plus exact reprojection
flow used as the ground-truth optical-flow backend in simulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..flow import DepthFrame, FlowProvider, Intrinsics
from ..se3 import Pose
from .scene import Scene


@dataclass(frozen=True)
class CameraConfig:
    intrinsics: Intrinsics
    near: float = 0.07
    far: float = 0.50
    # camera mounted behind the grasp frame on the wrist, looking along +z
    mount: Pose = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.mount is None:
            object.__setattr__(self, "mount", Pose.from_translation(0.0, 0.0, -0.22))


def default_camera(width: int = 160, height: int = 120, focal: float = 160.0) -> CameraConfig:
    k = Intrinsics(
        fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height
    )
    return CameraConfig(intrinsics=k)


@dataclass(frozen=True)
class RenderResult:
    """Per-pixel depth (z-depth, NaN invalid), world-frame surface normals,
    and object indices (-1 none, table_index for the plane)."""

    depth: np.ndarray
    normals: np.ndarray
    object_ids: np.ndarray
    TABLE_ID = -2


def _pixel_rays(k: Intrinsics) -> np.ndarray:
    """Camera-frame ray directions with unit z, so t equals z-depth."""
    vs, us = np.mgrid[0 : k.height, 0 : k.width].astype(np.float64)
    return np.stack([(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us)], axis=-1)


def render_depth(scene: Scene, camera_pose: Pose, cfg: CameraConfig) -> RenderResult:
    """Analytic ray-primitive intersection depth per pixel, with exact normals.

    Depth is z-depth in the camera frame; pixels with no hit inside
    [near, far] are NaN. Deterministic for a given scene and pose.
    """
    k = cfg.intrinsics
    rays_cam = _pixel_rays(k).reshape(-1, 3)
    origin = camera_pose.translation
    dirs_world = rays_cam @ camera_pose.rotation.T

    n_rays = len(rays_cam)
    best_t = np.full(n_rays, np.inf)
    best_obj = np.full(n_rays, -1, dtype=np.int32)

    for idx, obj in enumerate(scene.objects):
        inv = obj.pose.inverse()
        o_local = inv.transform_points(origin[None])[0]
        d_local = dirs_world @ inv.rotation.T
        t = obj.shape.intersect(o_local, d_local)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_obj[closer] = idx

    # table plane z = 0, finite disk
    dz = dirs_world[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_table = np.where(np.abs(dz) > 1e-12, -origin[2] / dz, np.inf)
    t_table = np.where(t_table > 1e-9, t_table, np.inf)
    with np.errstate(invalid="ignore"):
        hit_xy = origin[None, :2] + np.where(np.isfinite(t_table), t_table, 0.0)[:, None] * dirs_world[:, :2]
    on_disk = np.isfinite(t_table) & (np.sum(hit_xy * hit_xy, axis=1) <= scene.table_radius**2)
    t_table = np.where(on_disk, t_table, np.inf)
    table_closer = t_table < best_t
    best_t[table_closer] = t_table[table_closer]
    best_obj[table_closer] = RenderResult.TABLE_ID

    in_range = np.isfinite(best_t) & (best_t >= cfg.near) & (best_t <= cfg.far)
    depth = np.where(in_range, best_t, np.nan)

    normals = np.zeros((n_rays, 3))
    world_pts = origin[None] + np.where(in_range, best_t, 0.0)[:, None] * dirs_world
    for idx, obj in enumerate(scene.objects):
        mask = in_range & (best_obj == idx)
        if not mask.any():
            continue
        local_pts = obj.pose.inverse().transform_points(world_pts[mask])
        normals[mask] = obj.shape.normal_at(local_pts) @ obj.pose.rotation.T
    table_mask = in_range & (best_obj == RenderResult.TABLE_ID)
    normals[table_mask] = [0.0, 0.0, 1.0]
    best_obj = np.where(in_range, best_obj, -1)

    shape = (k.height, k.width)
    return RenderResult(
        depth=depth.reshape(shape),
        normals=normals.reshape(shape + (3,)),
        object_ids=best_obj.reshape(shape),
    )


def project(points: np.ndarray, camera_pose: Pose, k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """World points -> (pixel coordinates (N, 2), camera z-depth (N,))."""
    cam = camera_pose.inverse().transform_points(points)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam[:, 0] / z * k.fx + k.cx
        v = cam[:, 1] / z * k.fy + k.cy
    return np.stack([u, v], axis=1), z


def ground_truth_flow(
    scene_t: Scene,
    scene_t1: Scene,
    camera_pose: Pose,
    cfg: CameraConfig,
    camera_pose_t1: Pose | None = None,
    render_t: RenderResult | None = None,
    render_t1: RenderResult | None = None,
) -> np.ndarray:
    """Exact per-pixel reprojection flow between two scene states.

    Every valid pixel of the first render is carried by its object's rigid
    motion and reprojected into the second camera; static background pixels
    get zero motion (their flow is pure camera parallax, which is exact too).
    Pixels whose correspondence leaves the image or becomes occluded in the
    second frame are marked NaN.
    """
    cam1 = camera_pose_t1 if camera_pose_t1 is not None else camera_pose
    r0 = render_t if render_t is not None else render_depth(scene_t, camera_pose, cfg)
    r1 = render_t1 if render_t1 is not None else render_depth(scene_t1, cam1, cfg)
    k = cfg.intrinsics

    h, w = r0.depth.shape
    flow = np.full((h, w, 2), np.nan)
    valid = np.isfinite(r0.depth)
    if not valid.any():
        return flow

    vs, us = np.mgrid[0:h, 0:w]
    us_v, vs_v = us[valid], vs[valid]
    depth_v = r0.depth[valid]
    rays = _pixel_rays(k)[valid]
    world0 = camera_pose.transform_points(rays * depth_v[:, None])

    ids = r0.object_ids[valid]
    world1 = world0.copy()
    for idx, obj0 in enumerate(scene_t.objects):
        mask = ids == idx
        if not mask.any():
            continue
        obj1 = scene_t1.get(obj0.obj_id)
        if np.array_equal(obj0.pose.rotation, obj1.pose.rotation) and np.array_equal(
            obj0.pose.translation, obj1.pose.translation
        ):
            continue
        local = obj0.pose.inverse().transform_points(world0[mask])
        world1[mask] = obj1.pose.transform_points(local)

    px1, z1 = project(world1, cam1, k)
    ok = z1 > 0
    u1, v1 = px1[:, 0], px1[:, 1]
    ok &= (u1 >= 0) & (u1 <= w - 1) & (v1 >= 0) & (v1 <= h - 1)

    # occlusion check: the carried point must still be the visible surface
    ui = np.clip(np.rint(u1), 0, w - 1).astype(int)
    vi = np.clip(np.rint(v1), 0, h - 1).astype(int)
    seen = r1.depth[vi, ui]
    ok &= np.isfinite(seen) & (seen > z1 - 0.005)

    fu = np.where(ok, u1 - us_v, np.nan)
    fv = np.where(ok, v1 - vs_v, np.nan)
    flow[vs_v, us_v, 0] = fu
    flow[vs_v, us_v, 1] = fv
    return flow


class SyntheticFlowProvider(FlowProvider):
    """Flow backend with access to simulation ground truth.

    The harness registers each frame's scene state and render as it is
    produced; flow2d then answers exactly for any registered frame pair.
    """

    def __init__(self, cfg: CameraConfig, history: int = 8):
        self.cfg = cfg
        self.history = history
        self._frames: dict[float, tuple[Scene, Pose, RenderResult]] = {}

    def observe(self, timestamp: float, scene: Scene, camera_pose: Pose, render: RenderResult):
        self._frames[timestamp] = (scene, camera_pose, render)
        while len(self._frames) > self.history:
            del self._frames[min(self._frames)]

    def flow2d(self, prev: DepthFrame, next_frame: DepthFrame) -> np.ndarray:
        if prev.depth.shape != next_frame.depth.shape:
            raise ValueError("frame resolution mismatch")
        try:
            scene0, cam0, r0 = self._frames[prev.timestamp]
            scene1, cam1, r1 = self._frames[next_frame.timestamp]
        except KeyError as exc:
            raise ValueError("frame not registered with the synthetic provider") from exc
        return ground_truth_flow(
            scene0, scene1, cam0, self.cfg, camera_pose_t1=cam1, render_t=r0, render_t1=r1
        )
