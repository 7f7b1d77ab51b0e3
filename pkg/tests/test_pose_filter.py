import math

import numpy as np
import pytest

from grasptrack.pose_filter import FilterState, filter_pose, smoothing_factor
from grasptrack.se3 import Pose, rotation_angle, rot_y, translation_distance


def test_first_call_passes_through():
    raw = Pose(rot_y(0.4), np.array([0.1, 0.2, 0.3]))
    state, out = filter_pose(FilterState(), raw, dt=0.05)
    assert state.initialized
    np.testing.assert_array_equal(out.translation, raw.translation)
    np.testing.assert_allclose(out.rotation, raw.rotation, atol=1e-15)


def test_constant_input_is_fixed_point():
    raw = Pose(rot_y(-0.2), np.array([0.3, -0.1, 0.05]))
    state = FilterState()
    out = None
    for _ in range(120):
        state, out = filter_pose(state, raw, dt=0.05)
    assert translation_distance(out, raw) < 1e-6
    assert rotation_angle(out, raw) < 1e-6


def test_step_response_matches_closed_form_recurrence():
    # beta = 0 reduces the filter to a fixed-alpha exponential smoother.
    dt, cutoff, target = 0.05, 1.0, 0.05
    alpha = smoothing_factor(dt, cutoff)
    state = FilterState(min_cutoff=cutoff, beta=0.0)
    state, out = filter_pose(state, Pose.identity(), dt)  # initialize at 0
    expected = 0.0
    prev = 0.0
    for _ in range(60):
        state, out = filter_pose(state, Pose.from_translation(target, 0, 0), dt)
        expected = alpha * target + (1 - alpha) * expected
        x = out.translation[0]
        assert x == pytest.approx(expected, abs=1e-12)
        assert prev < x < target  # monotone approach, no overshoot
        prev = x


def test_step_displacement_never_exceeds_input_displacement():
    state = FilterState()
    state, _ = filter_pose(state, Pose.identity(), 0.05)
    prev = np.zeros(3)
    for _ in range(40):
        state, out = filter_pose(state, Pose.from_translation(0.05, 0, 0), 0.05)
        step = np.linalg.norm(out.translation - prev)
        assert step <= 0.05 + 1e-12
        prev = out.translation


def test_rotation_converges_and_stays_unit_norm():
    target = Pose(rot_y(math.radians(30)), np.zeros(3))
    state = FilterState()
    state, _ = filter_pose(state, Pose.identity(), 0.05)
    for _ in range(150):
        state, out = filter_pose(state, target, 0.05)
        assert abs(np.linalg.norm(state.prev_quat) - 1.0) < 1e-9
    assert rotation_angle(out, target) < 1e-4


def test_adaptive_cutoff_tracks_fast_motion_closer():
    # A moving target should lag less with beta > 0 than with beta = 0.
    def run(beta):
        state = FilterState(beta=beta)
        lag = 0.0
        for i in range(100):
            x = 0.09 * 0.05 * i  # 9 cm/s ramp
            state, out = filter_pose(state, Pose.from_translation(x, 0, 0), 0.05)
            lag = x - out.translation[0]
        return lag

    assert run(2.0) < run(0.0)


def test_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        filter_pose(FilterState(), Pose.identity(), 0.0)


def test_stationary_jitter_attenuated_below_1mm():
    # Raw best poses wobble with ~2 mm noise; the filtered target must hold
    # sub-millimeter jitter at the default 20 Hz settings.
    rng = np.random.default_rng(0)
    state = FilterState()
    outs = []
    for i in range(400):
        raw = Pose.from_translation(*(0.002 * rng.standard_normal(3)))
        state, out = filter_pose(state, raw, 0.05)
        if i >= 100:
            outs.append(out.translation)
    outs = np.array(outs)
    assert np.abs(outs - outs.mean(axis=0)).std(axis=0).max() < 0.001
