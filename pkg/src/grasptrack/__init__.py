"""Closed-loop grasp tracking: adaptive candidate sampling around a seed pose,
quality scoring with temporal-consistency penalties, and a filtered target
stream for a cartesian controller, plus a deterministic synthetic simulator
and experiment harness."""

from .se3 import Pose, compose, euler_to_pose, rotation_angle, translation_distance

__all__ = [
    "Pose",
    "compose",
    "euler_to_pose",
    "rotation_angle",
    "translation_distance",
]

__version__ = "0.1.0"
