# core/utils/rotations.py
from __future__ import annotations

import math

import numpy as np
from scipy.spatial.transform import Rotation

# Quaternions are (w, x, y, z) float64 arrays, canonical sign w >= 0.

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_canonical(q) -> np.ndarray:
    """Normalize and flip to the w >= 0 hemisphere."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-15:
        raise ValueError("zero-norm quaternion")
    q = q / n
    if q[0] < 0.0 or (q[0] == 0.0 and _first_nonzero(q[1:]) < 0.0):
        q = -q
    return q


def _first_nonzero(v: np.ndarray) -> float:
    for c in v:
        if c != 0.0:
            return float(c)
    return 0.0


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate a vector or an (N, 3) stack of vectors."""
    return np.asarray(v, dtype=float) @ quat_to_matrix(q).T


def quat_from_matrix(m) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(np.asarray(m, dtype=float)).as_quat()
    return quat_canonical([w, x, y, z])


def quat_from_rotvec(r) -> np.ndarray:
    x, y, z, w = Rotation.from_rotvec(np.asarray(r, dtype=float).reshape(3)).as_quat()
    return quat_canonical([w, x, y, z])


def quat_to_rotvec(q) -> np.ndarray:
    """Rotation vector of the shortest rotation represented by q."""
    w, x, y, z = quat_canonical(q)
    return Rotation.from_quat([x, y, z, w]).as_rotvec()


def quat_angle(a, b) -> float:
    """Geodesic angle between two orientations (radians)."""
    d = abs(float(np.dot(quat_canonical(a), quat_canonical(b))))
    return 2.0 * math.acos(min(1.0, d))


def quat_slerp(q0, q1, alpha: float) -> np.ndarray:
    """
    Shortest-arc spherical interpolation.
    alpha == 0 returns canonical q0 and alpha == 1 returns canonical q1, bit for bit.
    """
    q0 = quat_canonical(q0)
    q1 = quat_canonical(q1)
    if alpha <= 0.0:
        return q0
    if alpha >= 1.0:
        return q1

    # antipodal sign resolved before interpolating
    dot = float(np.dot(q0, q1))
    target = q1
    if dot < 0.0:
        target = -q1
        dot = -dot

    if dot > 0.9995:
        out = q0 + alpha * (target - q0)
        return quat_canonical(out)

    theta = math.acos(min(1.0, dot))
    sin_theta = math.sin(theta)
    w0 = math.sin((1.0 - alpha) * theta) / sin_theta
    w1 = math.sin(alpha * theta) / sin_theta
    return quat_canonical(w0 * q0 + w1 * target)


def look_at_quat(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """
    Camera orientation with +z along the optical axis (eye -> target),
    +x to the right and +y down in the image.
    """
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd /= np.linalg.norm(fwd)
    up_v = np.asarray(up, dtype=float)
    if abs(float(np.dot(fwd, up_v))) > 0.999:
        up_v = np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up_v)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return quat_from_matrix(np.column_stack([right, down, fwd]))


__all__ = [
    "IDENTITY_QUAT",
    "quat_canonical",
    "quat_multiply",
    "quat_conjugate",
    "quat_to_matrix",
    "quat_rotate",
    "quat_from_matrix",
    "quat_from_rotvec",
    "quat_to_rotvec",
    "quat_angle",
    "quat_slerp",
    "look_at_quat",
]
