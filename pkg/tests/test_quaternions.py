from __future__ import annotations

import numpy as np
import pytest

from ltsdem import quaternions as quat


def test_multiply_matches_matrix_composition():
    rng = np.random.default_rng(7)
    for _ in range(50):
        q1 = quat.normalize(rng.normal(size=4))
        q2 = quat.normalize(rng.normal(size=4))
        left = quat.to_matrix(quat.multiply(q1, q2))
        right = quat.to_matrix(q1) @ quat.to_matrix(q2)
        np.testing.assert_allclose(left, right, atol=1e-12)


def test_rotate_agrees_with_matrix():
    rng = np.random.default_rng(3)
    q = quat.normalize(rng.normal(size=4))
    v = rng.normal(size=(20, 3))
    np.testing.assert_allclose(quat.rotate(q, v), v @ quat.to_matrix(q).T, atol=1e-12)


def test_slerp_midpoint_of_quarter_turn():
    # Half of a 90 degree z-rotation is the analytic 45 degree quaternion.
    q0 = np.array([1.0, 0.0, 0.0, 0.0])
    q1 = quat.from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    mid = quat.slerp(q0, q1, 0.5)
    expected = np.array([np.cos(np.pi / 8), 0.0, 0.0, np.sin(np.pi / 8)])
    np.testing.assert_allclose(mid, expected, atol=1e-12)


def test_slerp_takes_shortest_arc_under_sign_flip():
    rng = np.random.default_rng(11)
    q0 = quat.normalize(rng.normal(size=4))
    q1 = quat.normalize(rng.normal(size=4))
    a = quat.slerp(q0, q1, 0.25)
    b = quat.slerp(q0, -q1, 0.25)
    # Same rotation either way.
    np.testing.assert_allclose(quat.to_matrix(a), quat.to_matrix(b), atol=1e-9)


def test_slerp_preserves_unit_norm():
    rng = np.random.default_rng(5)
    for _ in range(200):
        q0 = quat.normalize(rng.normal(size=4))
        q1 = quat.normalize(rng.normal(size=4))
        u = rng.uniform()
        assert abs(np.linalg.norm(quat.slerp(q0, q1, u)) - 1.0) < 1e-9


def test_advance_half_turn_about_z():
    # Spinning at pi rad/s for one second turns the identity into the
    # analytic 180 degree z-quaternion (0, 0, 0, 1).
    q = quat.advance(quat.IDENTITY, np.array([0.0, 0.0, np.pi]), 1.0)
    np.testing.assert_allclose(q, [0.0, 0.0, 0.0, 1.0], atol=1e-12)


def test_advance_composes_over_subintervals():
    rng = np.random.default_rng(13)
    q0 = quat.normalize(rng.normal(size=4))
    w = rng.normal(size=3)
    whole = quat.advance(q0, w, 0.8)
    split = quat.advance(quat.advance(q0, w, 0.5), w, 0.3)
    np.testing.assert_allclose(quat.to_matrix(whole), quat.to_matrix(split), atol=1e-12)


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        quat.normalize(np.zeros(4))
