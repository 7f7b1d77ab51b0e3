"""Geometric grasp adjudication and the simulation oracle.

Success is declared geometric, not physical: a grasp succeeds iff the gripper
body touches nothing (objects or table) at the grasp pose and closing the
fingers along the closure axis meets two opposing contacts on one object whose
surface normals oppose the closing direction within the friction cone. The
same analysis, with linear tapers over a small boundary band, yields the
oracle quality used in place of a learned evaluator.

All object geometry is handled as dense deterministic surface samples with
analytic normals, so every check is invariant under rigid transforms applied
to scene and grasp jointly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from ..cloud import PointCloud
from ..evaluator import Evaluator
from ..gripper import GripperModel
from ..se3 import Pose, compose, rot_z
from .primitives import Box, Cylinder, Shape, Sphere, cached_surface
from .scene import Scene, SimObject

FRICTION_CONE_DEG = 15.0
CONTACT_BAND = 0.002  # m, surface shell treated as the contact patch
TAPER_T = 0.005  # m, quality ramp for translation-like violations
TAPER_R = math.radians(5.0)  # quality ramp for angle violations
ADJUDICATE_PITCH = 0.002  # m, surface sampling for final success judgments
ORACLE_PITCH = 0.003  # m, coarser sampling for per-frame oracle scoring


@dataclass(frozen=True)
class ObjectContact:
    """Contact metrics for one object.

    Strict fields describe what the closing fingers physically meet (surface
    inside the true closing corridor); the violation fields are graded
    measures over a taper-dilated corridor, consumed only by the oracle's
    quality ramp.
    """

    obj_id: str
    corridor_points: int
    cos_left: float  # strict-corridor contact normal vs +x (closing direction)
    cos_right: float
    antipodal: bool
    dilated_cos_left: float
    dilated_cos_right: float
    fit_violation: float  # m outside the jaw span, dilated scope
    band_violation: float  # m outside the corridor in y/z at the dilated contacts


@dataclass(frozen=True)
class GraspDiagnostics:
    success: bool
    collision: bool
    penetration: float  # m, worst body/object or body/table overlap
    contact: ObjectContact | None  # best candidate object, if any was near


def _sweep_slab(gripper: GripperModel) -> tuple[np.ndarray, np.ndarray]:
    """Volume covered by the fingers across all closing positions."""
    center = np.array([0.0, 0.0, -0.5 * gripper.finger_length])
    half = np.array(
        [
            0.5 * gripper.max_opening + gripper.finger_thickness,
            0.5 * gripper.finger_width,
            0.5 * gripper.finger_length,
        ]
    )
    return center, half


def _box_corners(center: np.ndarray, half: np.ndarray) -> np.ndarray:
    signs = np.array(list(product((-1.0, 1.0), repeat=3)))
    return center + signs * half


def _table_penetration(grasp: Pose, gripper: GripperModel) -> float:
    boxes = gripper.link_boxes() + [_sweep_slab(gripper)]
    corners = np.concatenate([_box_corners(c, h) for c, h in boxes])
    world_z = grasp.transform_points(corners)[:, 2]
    return max(0.0, -float(world_z.min()))


def _analyze(
    scene: Scene,
    grasp: Pose,
    gripper: GripperModel,
    pitch: float,
) -> tuple[float, list[ObjectContact], float]:
    """Penetration depth, per-object contact metrics over the dilated corridor,
    and the nearest object-sample distance to the corridor."""
    inv = grasp.inverse()
    boxes = gripper.link_boxes()
    lo, hi = gripper.closing_region()
    jaw = 0.5 * gripper.max_opening
    cone_cos = math.cos(math.radians(FRICTION_CONE_DEG))

    penetration = _table_penetration(grasp, gripper)
    contacts: list[ObjectContact] = []
    nearest = np.inf

    for obj in scene.objects:
        pts_l, nrm_l = cached_surface(obj.shape, pitch)
        rel = compose(inv, obj.pose)  # object local -> grasp frame
        pts = pts_l @ rel.rotation.T + rel.translation
        nrm = nrm_l @ rel.rotation.T

        for center, half in boxes:
            depth = half - np.abs(pts - center)
            inside = np.all(depth > 0, axis=1)
            if inside.any():
                penetration = max(penetration, float(depth[inside].min(axis=1).max()))

        outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        dist = np.linalg.norm(outside, axis=1)
        nearest = min(nearest, float(dist.min()))
        dilated = dist <= TAPER_T
        if not dilated.any():
            continue

        def _extremes(cpts, cnrm):
            x = cpts[:, 0]
            x_max, x_min = float(x.max()), float(x.min())
            left = x >= x_max - CONTACT_BAND
            right = x <= x_min + CONTACT_BAND
            return (
                x_max,
                x_min,
                left,
                right,
                float(cnrm[left, 0].max()),
                float((-cnrm[right, 0]).max()),
            )

        strict = dist == 0.0
        if strict.any():
            _, _, _, _, s_cos_l, s_cos_r = _extremes(pts[strict], nrm[strict])
        else:
            s_cos_l = s_cos_r = -1.0

        cpts, cnrm = pts[dilated], nrm[dilated]
        x_max, x_min, left, right, d_cos_l, d_cos_r = _extremes(cpts, cnrm)
        fit = max(0.0, x_max - jaw, -jaw - x_min)
        yz_viol = np.maximum(
            np.maximum(np.abs(cpts[:, 1]) - hi[1], cpts[:, 2] - hi[2]), lo[2] - cpts[:, 2]
        )
        yz_viol = np.maximum(yz_viol, 0.0)
        band = max(float(yz_viol[left].min()), float(yz_viol[right].min()))

        contacts.append(
            ObjectContact(
                obj_id=obj.obj_id,
                corridor_points=int(strict.sum()),
                cos_left=s_cos_l,
                cos_right=s_cos_r,
                antipodal=min(s_cos_l, s_cos_r) >= cone_cos,
                dilated_cos_left=d_cos_l,
                dilated_cos_right=d_cos_r,
                fit_violation=fit,
                band_violation=band,
            )
        )
    return penetration, contacts, nearest


def adjudicate_grasp(
    scene: Scene,
    grasp: Pose,
    gripper: GripperModel | None = None,
    pitch: float = ADJUDICATE_PITCH,
) -> GraspDiagnostics:
    """Success flag plus diagnostics for a grasp pose against the scene."""
    gripper = gripper or GripperModel()
    penetration, contacts, _ = _analyze(scene, grasp, gripper, pitch)
    collision = penetration > 1e-7
    best = None
    for c in contacts:
        if c.corridor_points == 0:
            continue
        if best is None or (c.antipodal, min(c.cos_left, c.cos_right)) > (
            best.antipodal,
            min(best.cos_left, best.cos_right),
        ):
            best = c
    success = (not collision) and best is not None and best.antipodal
    return GraspDiagnostics(
        success=success, collision=collision, penetration=penetration, contact=best
    )


def _taper(violation: float, band: float) -> float:
    return float(np.clip(1.0 - violation / band, 0.0, 1.0))


def oracle_quality(
    scene: Scene,
    grasp: Pose,
    gripper: GripperModel,
    pitch: float = ORACLE_PITCH,
) -> float:
    """Quality 1 inside the adjudication-feasible set, ramping linearly to 0
    over a 5 mm / 5 degree band outside it.

    The taper gives the sampled score landscape usable structure; a pure
    {0, 1} oracle would make hill-climbing degenerate.
    """
    penetration, contacts, _ = _analyze(scene, grasp, gripper, pitch)
    f_pen = _taper(penetration, TAPER_T)
    if f_pen == 0.0 or not contacts:
        return 0.0
    cone = math.radians(FRICTION_CONE_DEG)
    best = 0.0
    for c in contacts:
        ang = max(
            math.acos(np.clip(c.dilated_cos_left, -1.0, 1.0)),
            math.acos(np.clip(c.dilated_cos_right, -1.0, 1.0)),
        )
        f_ant = _taper(max(0.0, ang - cone), TAPER_R)
        f_fit = _taper(c.fit_violation, TAPER_T)
        f_band = _taper(c.band_violation, TAPER_T)
        best = max(best, f_ant * f_fit * f_band)
    return f_pen * best


class OracleEvaluator(Evaluator):
    """Simulation-only evaluator answering from ground-truth geometry.

    Ignores the cloud contents: quality depends on the candidate pose and the
    true scene, so it is immune to sensor noise (its quality spread is zero by
    construction). The harness refreshes `scene` every frame.
    """

    def __init__(self, scene: Scene | None = None, gripper: GripperModel | None = None,
                 pitch: float = ORACLE_PITCH):
        self.scene = scene
        self.gripper = gripper or GripperModel()
        self.pitch = pitch

    def quality(self, batch: Sequence[PointCloud], poses: Sequence[Pose] | None = None) -> np.ndarray:
        if poses is None:
            raise ValueError("oracle evaluation requires candidate poses")
        if self.scene is None:
            raise ValueError("oracle evaluator has no scene bound")
        memo: dict[bytes, float] = {}
        out = np.zeros(len(poses))
        for i, pose in enumerate(poses):
            key = pose.rotation.tobytes() + pose.translation.tobytes()
            q = memo.get(key)
            if q is None:
                q = oracle_quality(self.scene, pose, self.gripper, self.pitch)
                memo[key] = q
            out[i] = q
        return out


# --- analytic grasp families and the oracle best-grasp query ---


def _frame_from_axes(x: np.ndarray, z: np.ndarray, origin: np.ndarray) -> Pose:
    z = z / np.linalg.norm(z)
    x = x - (x @ z) * z
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z], axis=1)
    return Pose(rot, origin)


def _fibonacci_dirs(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    theta = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def _any_perpendicular(z: np.ndarray) -> np.ndarray:
    ref = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, z)
    return x / np.linalg.norm(x)


def local_grasp_family(shape: Shape, gripper: GripperModel) -> list[Pose]:
    """Candidate grasps in the object's local frame, from the shape's analytic
    grasp family. Feasibility (table, collisions) is adjudicated by the caller."""
    jaw_fit = gripper.max_opening - 0.004
    L = gripper.finger_length
    fam: list[Pose] = []

    if isinstance(shape, Sphere):
        if 2.0 * shape.radius > jaw_fit:
            return []
        # grasp depth limited by palm clearance: the sphere's rear must stay
        # in front of the palm plane at corridor depth -L. The direction/depth
        # grid is dense because this family doubles as the tracking-error
        # reference: its translation spacing bounds the measurable error floor.
        deepest = shape.radius - L + 0.003
        depths = np.linspace(deepest, -0.004, 8) if deepest < -0.004 else [-0.004]
        for d in _fibonacci_dirs(96):
            x0 = _any_perpendicular(d)
            for roll in np.linspace(0.0, math.pi, 4, endpoint=False):
                c, s = math.cos(roll), math.sin(roll)
                x = c * x0 + s * np.cross(d, x0)
                for center_depth in depths:
                    fam.append(_frame_from_axes(x, d, -center_depth * d))
        return fam

    if isinstance(shape, Cylinder):
        hh = 0.5 * shape.height
        if 2.0 * shape.radius <= jaw_fit:
            # along the axis, fingers straddling the wall near one end
            for sign in (1.0, -1.0):
                z_dir = np.array([0.0, 0.0, -sign])
                ends = sorted((sign * (hh - L + 0.002), sign * (hh - 0.006)))
                for z_o in np.linspace(ends[0], ends[1], 4):
                    for az in np.linspace(0.0, math.pi, 8, endpoint=False):
                        x = np.array([math.cos(az), math.sin(az), 0.0])
                        fam.append(_frame_from_axes(x, z_dir, np.array([0.0, 0.0, z_o])))
            # radial approach, closing across the tangent directions
            z_span = max(0.0, hh - 0.5 * gripper.finger_width)
            z_grid = np.linspace(-z_span, z_span, 4) if z_span > 0 else [0.0]
            tip_lo = max(-0.013, shape.radius - L + 0.002)
            for theta in np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False):
                r_hat = np.array([math.cos(theta), math.sin(theta), 0.0])
                t_hat = np.array([-math.sin(theta), math.cos(theta), 0.0])
                for tip_r in (tip_lo, 0.5 * tip_lo):
                    for zc in z_grid:
                        origin = r_hat * tip_r + np.array([0.0, 0.0, zc])
                        fam.append(_frame_from_axes(t_hat, -r_hat, origin))
        if shape.height <= jaw_fit:
            # pinch across the flat caps, approaching radially
            for theta in np.linspace(0.0, 2.0 * math.pi, 12, endpoint=False):
                r_hat = np.array([math.cos(theta), math.sin(theta), 0.0])
                for tip_r in (shape.radius - 0.4 * L, shape.radius - 0.8 * L):
                    if tip_r + L < shape.radius:  # palm would hit the wall
                        continue
                    fam.append(
                        _frame_from_axes(np.array([0.0, 0.0, 1.0]), -r_hat, r_hat * tip_r)
                    )
        return fam

    if isinstance(shape, Box):
        sizes = np.array([shape.size_x, shape.size_y, shape.size_z])
        axes = np.eye(3)
        for i in range(3):
            if sizes[i] > jaw_fit:
                continue
            for j in range(3):
                if j == i:
                    continue
                k_ax = 3 - i - j
                depths = [d for d in (0.015, 0.03, 0.045) if d <= L - 0.002]
                k_lim = max(0.0, 0.5 * sizes[k_ax] - 0.5 * gripper.finger_width)
                k_offsets = np.linspace(-k_lim, k_lim, 3) if k_lim > 0 else [0.0]
                for j_sign in (1.0, -1.0):
                    approach = -j_sign * axes[j]
                    for depth in depths:
                        for ko in k_offsets:
                            origin = j_sign * axes[j] * (0.5 * sizes[j] - depth) + axes[k_ax] * ko
                            for x_sign in (1.0, -1.0):
                                fam.append(_frame_from_axes(x_sign * axes[i], approach, origin))
        return fam

    raise TypeError(f"no grasp family for {type(shape).__name__}")


_family_cache: dict[tuple, list[Pose]] = {}


def feasible_world_grasps(
    scene: Scene, obj: SimObject, gripper: GripperModel | None = None
) -> list[Pose]:
    """Adjudication-successful world-frame grasps on one object.

    Cached per object geometry + orientation + height for single-object
    scenes, since feasibility there is invariant under horizontal motion.
    """
    gripper = gripper or GripperModel()
    single = len(scene.objects) == 1
    key = None
    if single:
        key = (
            obj.obj_id,
            obj.shape,
            gripper,
            tuple(np.round(obj.pose.quat(), 9)),
            round(float(obj.pose.translation[2]), 9),
        )
        cached = _family_cache.get(key)
        if cached is not None:
            base = Pose(obj.pose.rotation, obj.pose.translation)
            return [compose(base, g) for g in cached]

    local = local_grasp_family(obj.shape, gripper)
    feasible_local = []
    for g in local:
        world = compose(obj.pose, g)
        if adjudicate_grasp(scene, world, gripper).success:
            feasible_local.append(g)
    if single and key is not None:
        _family_cache[key] = feasible_local
    return [compose(obj.pose, g) for g in feasible_local]


def oracle_best_grasp(
    scene: Scene,
    near: Pose,
    radius: float,
    gripper: GripperModel | None = None,
) -> Pose:
    """The adjudication-successful grasp nearest `near` within `radius`.

    Nearness is translation distance plus a small rotation term (0.02 m per
    radian) so symmetric families resolve deterministically.
    """
    from ..se3 import rotation_angle, translation_distance

    gripper = gripper or GripperModel()
    best: tuple[float, Pose] | None = None
    for obj in scene.objects:
        for world in feasible_world_grasps(scene, obj, gripper):
            t_dist = translation_distance(near, world)
            if t_dist > radius:
                continue
            d = t_dist + 0.02 * rotation_angle(near, world)
            if best is None or d < best[0]:
                best = (d, world)
    if best is None:
        raise ValueError("no feasible grasp within radius")
    return best[1]


def generate_hard_negatives(
    positives: Sequence[Pose],
    z_offsets: Sequence[float],
    xy_offsets: Sequence[float],
    min_dist: float,
) -> list[Pose]:
    """Offset combinations in each positive's own frame, dropping any result
    whose translation lands within min_dist of any positive's translation."""
    if min_dist <= 0:
        raise ValueError("min_dist must be positive")
    if not positives:
        return []
    xs = [0.0] + [float(v) for v in xy_offsets]
    ys = [0.0] + [float(v) for v in xy_offsets]
    zs = [0.0] + [float(v) for v in z_offsets]
    pos_t = np.stack([p.translation for p in positives])
    out: list[Pose] = []
    for p in positives:
        for dx, dy, dz in product(xs, ys, zs):
            if dx == 0.0 and dy == 0.0 and dz == 0.0:
                continue
            cand = compose(p, Pose.from_translation(dx, dy, dz))
            d = np.linalg.norm(pos_t - cand.translation, axis=1)
            if d.min() >= min_dist:
                out.append(cand)
    return out
