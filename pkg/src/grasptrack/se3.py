"""Rigid-body pose algebra: composition, Euler perturbations, distance metrics.

Poses are stored as an explicit rotation matrix plus translation vector since
the scorer's trace formula and the crop transforms consume matrices directly.
Quaternions appear only for serialization and output filtering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Pose invariant tolerance: R.T @ R == I and det(R) == 1 within this, per entry.
ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class Pose:
    """Rigid transform in SE(3): 3x3 rotation matrix + translation in meters."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {self.rotation.shape}")
        if self.translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {self.translation.shape}")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "Pose":
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @classmethod
    def from_quat(cls, quat: np.ndarray, translation: np.ndarray) -> "Pose":
        return cls(quat_to_matrix(np.asarray(quat, dtype=np.float64)), translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 3) points from this pose's local frame into the parent frame."""
        return points @ self.rotation.T + self.translation

    def transform_dirs(self, dirs: np.ndarray) -> np.ndarray:
        """Rotate (N, 3) direction vectors (no translation)."""
        return dirs @ self.rotation.T

    def quat(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) for this rotation."""
        return matrix_to_quat(self.rotation)

    def is_valid(self, tol: float = ORTHONORMAL_TOL) -> bool:
        if not np.all(np.isfinite(self.rotation)) or not np.all(np.isfinite(self.translation)):
            return False
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        return err <= tol and abs(np.linalg.det(self.rotation) - 1.0) <= tol


@dataclass(frozen=True)
class EulerPerturbation:
    """Small pose offset as intrinsic x->y->z Euler angles plus a translation.

    The sampler only ever produces roll == 0: the roll axis matches the finger
    closure direction, where orientation barely affects grasp quality.
    """

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compose(base: Pose, delta: Pose) -> Pose:
    """Right-multiply: returns base * delta, with delta expressed in the base frame."""
    return Pose(base.rotation @ delta.rotation, base.rotation @ delta.translation + base.translation)


def euler_to_pose(e: EulerPerturbation) -> Pose:
    """Build a Pose from intrinsic rotations applied in roll->pitch->yaw order
    about the local x->y->z axes; the translation is copied through."""
    return Pose(rot_x(e.roll) @ rot_y(e.pitch) @ rot_z(e.yaw), e.translation)


def translation_distance(a: Pose, b: Pose) -> float:
    """L2 norm between the two positions, in meters."""
    return float(np.linalg.norm(a.translation - b.translation))


def rotation_angle(a: Pose, b: Pose) -> float:
    """Geodesic angle between the two rotations, in radians.

    Uses the trace identity Tr(Ra.T @ Rb) = 1 + 2 cos(theta); the arccos
    argument is clamped so round-off near 0 or pi can never produce NaN.
    """
    trace = float(np.trace(a.rotation.T @ b.rotation))
    return math.acos(min(1.0, max(-1.0, 0.5 * (trace - 1.0))))


def orthonormalize(pose: Pose) -> Pose:
    """Re-project the rotation onto SO(3) via polar decomposition.

    Used after long composition chains when the orthonormality invariant
    drifts past tolerance.
    """
    u, _, vt = np.linalg.svd(pose.rotation)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return Pose(r, pose.translation)


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), w >= 0."""
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    q /= np.linalg.norm(q)
    return q if q[0] >= 0.0 else -q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) -> rotation matrix."""
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_slerp(qa: np.ndarray, qb: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical interpolation between unit quaternions."""
    qa = qa / np.linalg.norm(qa)
    qb = qb / np.linalg.norm(qb)
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb, dot = -qb, -dot
    if dot > 0.9995:
        q = qa + t * (qb - qa)
        return q / np.linalg.norm(q)
    theta = math.acos(min(1.0, dot))
    sin_theta = math.sin(theta)
    q = (math.sin((1.0 - t) * theta) / sin_theta) * qa + (math.sin(t * theta) / sin_theta) * qb
    return q / np.linalg.norm(q)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (via a normalized random quaternion)."""
    q = rng.normal(size=4)
    return quat_to_matrix(q / np.linalg.norm(q))
