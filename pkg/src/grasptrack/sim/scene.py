"""Synthetic world state: primitive objects on a table plane at z = 0, each
with a closed-form motion script evaluated at absolute time t (no dynamics)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..se3 import Pose, rot_z
from .primitives import Shape


@dataclass(frozen=True)
class Static:
    pass


@dataclass(frozen=True)
class Turntable:
    """Circular arc about a vertical axis through `center`, stopping once the
    commanded extent is reached."""

    radius: float
    omega: float  # rad/s
    extent: float  # total angle to travel, radians (magnitude)
    direction: int = 1  # +1 counter-clockwise, -1 clockwise
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.direction not in (-1, 1):
            raise ValueError("direction must be +1 or -1")


@dataclass(frozen=True)
class Linear:
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=np.float64))


@dataclass(frozen=True)
class RandomWalk:
    """Smooth quasi-periodic wandering: per-axis sinusoid sums with the
    amplitude/frequency mix drawn once from `seed`, velocity bounded by
    speed_max and yaw rate by rot_max."""

    speed_max: float = 0.02  # m/s
    rot_max: float = 0.2  # rad/s
    seed: int = 0
    amplitude: float = 0.05  # m, per-axis excursion bound

    def params(self):
        rng = np.random.default_rng(self.seed)
        n_terms = 3
        phases = rng.uniform(0, 2 * math.pi, size=(3, n_terms))
        weights = rng.uniform(0.3, 1.0, size=(3, n_terms))
        weights /= weights.sum(axis=1, keepdims=True)
        freqs = rng.uniform(0.05, 0.25, size=(3, n_terms))  # Hz
        # scale so the per-axis speed bound sums to speed_max / sqrt(3)
        axis_v = self.speed_max / math.sqrt(3.0)
        scales = weights * axis_v / (2.0 * math.pi * freqs * weights).sum(axis=1, keepdims=True)
        scales = np.minimum(scales, self.amplitude * weights)
        yaw_phase = rng.uniform(0, 2 * math.pi)
        yaw_freq = rng.uniform(0.05, 0.2)
        yaw_amp = min(self.rot_max / (2.0 * math.pi * yaw_freq), math.pi / 6)
        return phases, freqs, scales, yaw_phase, yaw_freq, yaw_amp


@dataclass(frozen=True)
class External:
    """Pose is driven from outside (the bridge); time evolution is identity."""


MotionScript = Static | Turntable | Linear | RandomWalk | External


@dataclass(frozen=True)
class SimObject:
    obj_id: str
    shape: Shape
    pose: Pose  # pose at t = 0 (current pose for External objects)
    script: MotionScript = field(default_factory=Static)


@dataclass(frozen=True)
class Scene:
    objects: tuple[SimObject, ...]
    table_radius: float = 0.8  # rendered extent of the z = 0 table plane

    def __post_init__(self):
        ids = [o.obj_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")

    def get(self, obj_id: str) -> SimObject:
        for o in self.objects:
            if o.obj_id == obj_id:
                return o
        raise KeyError(obj_id)

    def with_object_pose(self, obj_id: str, pose: Pose) -> "Scene":
        objs = tuple(replace(o, pose=pose) if o.obj_id == obj_id else o for o in self.objects)
        return replace(self, objects=objs)


def _pose_at(obj: SimObject, t: float) -> Pose:
    s = obj.script
    if isinstance(s, (Static, External)):
        return obj.pose
    if isinstance(s, Linear):
        return Pose(obj.pose.rotation, obj.pose.translation + s.velocity * t)
    if isinstance(s, Turntable):
        traveled = min(s.omega * t, abs(s.extent)) * s.direction
        rot = rot_z(traveled)
        center = np.array([s.center[0], s.center[1], 0.0])
        return Pose(
            rot @ obj.pose.rotation, rot @ (obj.pose.translation - center) + center
        )
    if isinstance(s, RandomWalk):
        phases, freqs, scales, yaw_phase, yaw_freq, yaw_amp = s.params()
        w = 2.0 * math.pi * freqs
        # zero displacement at t = 0 by subtracting the initial phase term
        disp = (scales * (np.sin(w * t + phases) - np.sin(phases))).sum(axis=1)
        yaw = yaw_amp * (
            math.sin(2.0 * math.pi * yaw_freq * t + yaw_phase) - math.sin(yaw_phase)
        )
        return Pose(rot_z(yaw) @ obj.pose.rotation, obj.pose.translation + disp)
    raise TypeError(f"unknown script {type(s).__name__}")


def step_scene(scene: Scene, t: float) -> Scene:
    """Scene state at absolute time t, from each object's script (closed form)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    objs = tuple(replace(o, pose=_pose_at(o, t)) for o in scene.objects)
    return replace(scene, objects=objs)
