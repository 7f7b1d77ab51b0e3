"""Adaptive low-pass filtering of the selected grasp pose before it becomes
the controller target: per-axis one-euro smoothing on translation, shared-alpha
shortest-arc quaternion interpolation on rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import Pose, matrix_to_quat, quat_slerp, quat_to_matrix


@dataclass(frozen=True)
class FilterState:
    min_cutoff: float = 1.0  # Hz
    beta: float = 0.5  # cutoff gain per unit of filtered speed
    d_cutoff: float = 1.0  # Hz, for the derivative estimate
    prev_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_derivative: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    initialized: bool = False

    def __post_init__(self):
        if self.min_cutoff <= 0:
            raise ValueError("min_cutoff must be positive")


def smoothing_factor(dt: float, cutoff: float) -> float:
    """First-order low-pass alpha for a given timestep and cutoff frequency."""
    tau = 1.0 / (2.0 * math.pi * cutoff)
    return 1.0 / (1.0 + tau / dt)


def filter_pose(state: FilterState, raw: Pose, dt: float) -> tuple[FilterState, Pose]:
    """One filter step; returns the updated state and the smoothed pose.

    The first call initializes the state and passes the raw pose through
    unchanged. Translation uses an adaptive cutoff min_cutoff + beta*|speed|
    per axis; rotation slerps from the previous filtered orientation toward
    the raw one by the mean translation alpha, renormalizing the quaternion.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    raw_q = matrix_to_quat(raw.rotation)
    if not state.initialized:
        new_state = replace(
            state,
            prev_translation=raw.translation.copy(),
            prev_derivative=np.zeros(3),
            prev_quat=raw_q,
            initialized=True,
        )
        return new_state, raw

    dx = (raw.translation - state.prev_translation) / dt
    a_d = smoothing_factor(dt, state.d_cutoff)
    dx_hat = a_d * dx + (1.0 - a_d) * state.prev_derivative
    cutoff = state.min_cutoff + state.beta * np.abs(dx_hat)
    alpha = np.array([smoothing_factor(dt, c) for c in cutoff])
    t_hat = alpha * raw.translation + (1.0 - alpha) * state.prev_translation

    q_hat = quat_slerp(state.prev_quat, raw_q, float(alpha.mean()))
    q_hat = q_hat / np.linalg.norm(q_hat)

    new_state = replace(
        state, prev_translation=t_hat, prev_derivative=dx_hat, prev_quat=q_hat, initialized=True
    )
    return new_state, Pose(quat_to_matrix(q_hat), t_hat)
