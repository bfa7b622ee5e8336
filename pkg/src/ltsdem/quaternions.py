"""Unit quaternion helpers for rigid body orientation.

Quaternions are plain numpy arrays ``[w, x, y, z]`` with scalar part first.
All functions are pure and operate on float64 arrays.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# Below this angle the slerp denominator is unstable and lerp is exact enough.
_DOT_THRESHOLD = 0.9995


def normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by unit quaternion q.

    v may be a single vector of shape (3,) or an array of shape (n, 3).
    Uses the expanded sandwich product, which vectorizes cleanly.
    """
    w = q[0]
    u = q[1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return IDENTITY.copy()
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def from_rotation_vector(phi: np.ndarray) -> np.ndarray:
    """Quaternion exponential of a rotation vector (axis * angle)."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle < 1e-12:
        # Second order series keeps the result smooth through zero spin.
        return normalize(np.concatenate(([1.0], 0.5 * phi)))
    return from_axis_angle(phi, angle)


def advance(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Advance orientation q by a constant world-frame angular velocity.

    Exact free rotation update: q(t + dt) = exp(omega * dt / 2) * q(t).
    """
    return normalize(multiply(from_rotation_vector(np.asarray(omega) * dt), q))


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Spherical interpolation between unit quaternions, shortest arc.

    The sign of q1 is flipped when the pair sits on opposite hemispheres so
    the path never takes the long way round. Falls back to normalized lerp
    for nearly aligned inputs where sin(theta) underflows.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > _DOT_THRESHOLD:
        return normalize(q0 + u * (q1 - q0))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return normalize((np.sin((1.0 - u) * theta) / s) * q0 + (np.sin(u * theta) / s) * q1)
