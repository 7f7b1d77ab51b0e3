import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grasptrack.se3 import (
    EulerPerturbation,
    Pose,
    compose,
    euler_to_pose,
    matrix_to_quat,
    orthonormalize,
    quat_to_matrix,
    rotation_angle,
    rot_z,
    translation_distance,
)

# --- independent quaternion oracle (no shared code with the module under test) ---


def oracle_axis_quat(axis_index, angle):
    q = [math.cos(angle / 2.0), 0.0, 0.0, 0.0]
    q[1 + axis_index] = math.sin(angle / 2.0)
    return np.array(q)


def oracle_hamilton(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def oracle_quat_angle(qa, qb):
    """Geodesic angle between two rotations given as unit quaternions."""
    dot = abs(float(np.dot(qa, qb)))
    return 2.0 * math.acos(min(1.0, dot))


def oracle_quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_pose(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(oracle_quat_to_matrix(q), rng.uniform(-1, 1, size=3)), q


# --- compose ---


def test_compose_identity_base():
    p = compose(Pose.identity(), Pose.from_translation(0.01, 0, 0))
    np.testing.assert_allclose(p.translation, [0.01, 0, 0])
    np.testing.assert_allclose(p.rotation, np.eye(3))


def test_compose_right_multiplication_semantics():
    base = Pose(rot_z(math.pi / 2), np.zeros(3))
    p = compose(base, Pose.from_translation(0.02, 0, 0))
    np.testing.assert_allclose(p.translation, [0, 0.02, 0], atol=1e-15)


def test_compose_identity_delta():
    rng = np.random.default_rng(0)
    p, _ = random_pose(rng)
    q = compose(p, Pose.identity())
    np.testing.assert_array_equal(q.rotation, p.rotation)
    np.testing.assert_array_equal(q.translation, p.translation)


def test_compose_associative():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, _ = random_pose(rng)
        b, _ = random_pose(rng)
        c, _ = random_pose(rng)
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        np.testing.assert_allclose(left.rotation, right.rotation, atol=1e-9)
        np.testing.assert_allclose(left.translation, right.translation, atol=1e-9)


# --- euler_to_pose ---


def test_euler_zero_is_identity():
    p = euler_to_pose(EulerPerturbation())
    np.testing.assert_array_equal(p.rotation, np.eye(3))
    np.testing.assert_array_equal(p.translation, np.zeros(3))


def test_euler_single_axis_pitch():
    p = euler_to_pose(EulerPerturbation(pitch=math.radians(5)))
    assert rotation_angle(Pose.identity(), p) == pytest.approx(0.08727, abs=5e-6)


def test_euler_pitch_yaw_against_quaternion_oracle():
    # Intrinsic x->y->z order composes as qx * qy * qz.
    pitch = yaw = math.radians(5)
    p = euler_to_pose(EulerPerturbation(pitch=pitch, yaw=yaw))
    q_oracle = oracle_hamilton(oracle_axis_quat(1, pitch), oracle_axis_quat(2, yaw))
    expected = oracle_quat_angle(np.array([1.0, 0, 0, 0]), q_oracle)
    assert rotation_angle(Pose.identity(), p) == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(p.rotation, oracle_quat_to_matrix(q_oracle), atol=1e-12)


def test_euler_translation_copied_through():
    p = euler_to_pose(EulerPerturbation(translation=np.array([1.0, 2.0, 3.0])))
    np.testing.assert_array_equal(p.translation, [1.0, 2.0, 3.0])


# --- translation_distance ---


def test_translation_distance_zero():
    p = Pose.from_translation(0.4, -0.2, 0.1)
    assert translation_distance(p, p) == 0.0


def test_translation_distance_345():
    a = Pose.identity()
    b = Pose.from_translation(0.03, 0.04, 0)
    assert translation_distance(a, b) == pytest.approx(0.05, abs=1e-15)


def test_translation_distance_matches_arithmetic_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a, _ = random_pose(rng)
        b, _ = random_pose(rng)
        d = a.translation - b.translation
        expected = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
        assert translation_distance(a, b) == pytest.approx(expected, abs=1e-12)
        assert translation_distance(b, a) == translation_distance(a, b)


# --- rotation_angle ---


def test_rotation_angle_zero():
    rng = np.random.default_rng(3)
    p, _ = random_pose(rng)
    assert rotation_angle(p, p) == pytest.approx(0.0, abs=1e-7)


def test_rotation_angle_quarter_turn():
    b = Pose(rot_z(math.pi / 2), np.zeros(3))
    assert rotation_angle(Pose.identity(), b) == pytest.approx(math.pi / 2, abs=1e-12)


def test_rotation_angle_matches_quaternion_oracle():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        a, qa = random_pose(rng)
        b, qb = random_pose(rng)
        got = rotation_angle(a, b)
        expected = oracle_quat_angle(qa, qb)
        worst = max(worst, abs(got - expected))
        assert rotation_angle(b, a) == got
    assert worst < 1e-9


def test_rotation_angle_clamps_trace_overflow():
    # A rotation whose trace is numerically slightly above 3 must give 0, not NaN.
    r = np.eye(3) * (1.0 + 1e-7 / 3.0)
    angle = rotation_angle(Pose.identity(), Pose(r, np.zeros(3)))
    assert angle == 0.0


def test_rotation_angle_of_pitch_offset_equals_magnitude():
    rng = np.random.default_rng(5)
    for alpha in [-3.0, -0.5, -1e-4, 1e-4, 0.7, 3.1]:
        p, _ = random_pose(rng)
        q = compose(p, euler_to_pose(EulerPerturbation(pitch=alpha)))
        assert rotation_angle(p, q) == pytest.approx(abs(alpha), abs=1e-9)


# --- quaternion round trips and re-projection ---


def test_quat_round_trip():
    rng = np.random.default_rng(6)
    for _ in range(200):
        p, q = random_pose(rng)
        q2 = matrix_to_quat(p.rotation)
        assert abs(abs(float(np.dot(q, q2))) - 1.0) < 1e-12
        np.testing.assert_allclose(quat_to_matrix(q2), p.rotation, atol=1e-12)


def test_orthonormalize_restores_invariant():
    rng = np.random.default_rng(7)
    p, _ = random_pose(rng)
    drifted = Pose(p.rotation + rng.normal(scale=1e-6, size=(3, 3)), p.translation)
    fixed = orthonormalize(drifted)
    assert fixed.is_valid()
    assert rotation_angle(p, fixed) < 1e-5


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-math.pi, math.pi),
    st.floats(-1.5, 1.5),
    st.floats(-1.5, 1.5),
)
def test_rotation_angle_symmetric_property(yaw, pitch, roll):
    a = euler_to_pose(EulerPerturbation(roll=roll, pitch=pitch, yaw=yaw))
    b = euler_to_pose(EulerPerturbation(roll=yaw / 2, pitch=roll / 3, yaw=pitch))
    assert rotation_angle(a, b) == rotation_angle(b, a)
    assert 0.0 <= rotation_angle(a, b) <= math.pi
