"""Parametric two-finger gripper model.

Grasp frame convention: origin at the center of the fingertip plane, +z is the
approach direction (toward the object), x is the finger closure axis, so the
fingers sit at +/-x and sweep inward along x when closing. Fingers occupy
z in [-finger_length, 0]; the palm block sits behind them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GripperModel:
    max_opening: float = 0.08  # gap between finger inner faces when open
    finger_length: float = 0.05
    finger_width: float = 0.02  # along y
    finger_thickness: float = 0.012  # along x
    palm_depth: float = 0.03  # along z, behind the fingers
    palm_height: float = 0.03  # along y

    def __post_init__(self):
        if self.max_opening <= 0:
            raise ValueError("max_opening must be positive")

    @property
    def palm_width(self) -> float:
        return self.max_opening + 2.0 * self.finger_thickness

    def link_boxes(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Axis-aligned link boxes in the grasp frame as (center, half_extents).

        Order: left finger (+x), right finger (-x), palm.
        """
        fx = 0.5 * (self.max_opening + self.finger_thickness)
        fc = -0.5 * self.finger_length
        finger_half = np.array(
            [0.5 * self.finger_thickness, 0.5 * self.finger_width, 0.5 * self.finger_length]
        )
        palm_center = np.array([0.0, 0.0, -self.finger_length - 0.5 * self.palm_depth])
        palm_half = np.array([0.5 * self.palm_width, 0.5 * self.palm_height, 0.5 * self.palm_depth])
        return [
            (np.array([fx, 0.0, fc]), finger_half),
            (np.array([-fx, 0.0, fc]), finger_half),
            (palm_center, palm_half),
        ]

    def closing_region(self) -> tuple[np.ndarray, np.ndarray]:
        """Box swept by the finger inner faces while closing: (lo, hi) corners."""
        lo = np.array([-0.5 * self.max_opening, -0.5 * self.finger_width, -self.finger_length])
        hi = np.array([0.5 * self.max_opening, 0.5 * self.finger_width, 0.0])
        return lo, hi
