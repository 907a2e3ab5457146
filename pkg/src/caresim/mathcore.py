"""Fixed numeric primitives shared by every other module.

Conventions (used everywhere, converted only at file-format boundaries):
    - lengths in meters, angles in radians, forces in N, torques in N*m,
      masses in kg
    - vectors are numpy float64 arrays of shape (3,)
    - quaternions are numpy float64 arrays [w, x, y, z], kept unit-norm
    - 3-DoF joints rotate intrinsic XYZ: R = Rx(a) @ Ry(b) @ Rz(c)
"""

from dataclasses import dataclass, field

import numpy as np


class NotSPD(Exception):
    """Matrix handed to solve_spd is not symmetric positive definite."""


def vec3(x=0.0, y=0.0, z=0.0):
    return np.array([x, y, z], dtype=np.float64)


def as_vec3(v):
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a


# ---------------------------------------------------------------------------
# Quaternions [w, x, y, z]
# ---------------------------------------------------------------------------

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat(w, x, y, z):
    return np.array([w, x, y, z], dtype=np.float64)


def quat_normalize(q):
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    return q / n


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def cross3(a, b):
    """Cross product of two 3-vectors. numpy's generic cross spends an
    order of magnitude more time on axis bookkeeping than on the six
    multiplies; inner loops here are all single 3-vectors."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def quat_rotate(q, v):
    """Rotate vector v (3,) or batch (N, 3) by unit quaternion q."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    if getattr(v, "ndim", 1) == 1:
        vx, vy, vz = v[0], v[1], v[2]
        tx = 2.0 * (y * vz - z * vy)
        ty = 2.0 * (z * vx - x * vz)
        tz = 2.0 * (x * vy - y * vx)
        return np.array([
            vx + w * tx + (y * tz - z * ty),
            vy + w * ty + (z * tx - x * tz),
            vz + w * tz + (x * ty - y * tx),
        ])
    u = q[1:4]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_from_axis_angle(axis, angle):
    axis = as_vec3(axis)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    half = 0.5 * angle
    s = np.sin(half) / n
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m):
    """Unit quaternion for a proper rotation matrix (Shepperd's method)."""
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return quat_normalize(q)


def quat_from_intrinsic_xyz(angles):
    """Quaternion of the intrinsic XYZ rotation Rx(a) Ry(b) Rz(c).

    This is the rotation convention for every 3-DoF joint; the clinical
    range-of-motion tables are given per anatomical axis in this order.
    """
    a, b, c = angles
    qx = quat_from_axis_angle((1.0, 0.0, 0.0), a)
    qy = quat_from_axis_angle((0.0, 1.0, 0.0), b)
    qz = quat_from_axis_angle((0.0, 0.0, 1.0), c)
    return quat_normalize(quat_mul(quat_mul(qx, qy), qz))


def quat_to_intrinsic_xyz(q):
    """Recover intrinsic XYZ angles. Degenerate near |b| = pi/2 (gimbal lock)."""
    m = quat_to_matrix(q)
    b = np.arcsin(np.clip(m[0, 2], -1.0, 1.0))
    a = np.arctan2(-m[1, 2], m[2, 2])
    c = np.arctan2(-m[0, 1], m[0, 0])
    return np.array([a, b, c])


def quat_from_rpy(r, p, y):
    """Fixed-axis roll-pitch-yaw (URDF origin convention): R = Rz(y) Ry(p) Rx(r)."""
    qz = quat_from_axis_angle((0.0, 0.0, 1.0), y)
    qy = quat_from_axis_angle((0.0, 1.0, 0.0), p)
    qx = quat_from_axis_angle((1.0, 0.0, 0.0), r)
    return quat_normalize(quat_mul(quat_mul(qz, qy), qx))


# ---------------------------------------------------------------------------
# Rigid transforms
# ---------------------------------------------------------------------------


@dataclass
class Transform:
    """Rigid transform: rotation quaternion and translation, applied as R v + t."""

    rot: np.ndarray = field(default_factory=lambda: QUAT_IDENTITY.copy())
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, v):
        return quat_rotate(self.rot, as_vec3(v)) + self.pos

    def compose(self, other):
        """self then other in self's frame: returns self * other."""
        return Transform(
            rot=quat_normalize(quat_mul(self.rot, other.rot)),
            pos=self.pos + quat_rotate(self.rot, other.pos),
        )

    def inverse(self):
        qc = quat_conj(self.rot)
        return Transform(rot=qc, pos=-quat_rotate(qc, self.pos))

    def copy(self):
        return Transform(rot=self.rot.copy(), pos=self.pos.copy())


def transform_identity():
    return Transform()


# ---------------------------------------------------------------------------
# Dense linear algebra
# ---------------------------------------------------------------------------


def solve_spd(a, b):
    """Solve A x = b for symmetric positive definite A via Cholesky.

    Raises NotSPD when A is asymmetric beyond 1e-8 relative or any Cholesky
    pivot is non-positive.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSPD(f"matrix is {a.shape}, expected square")
    scale = np.linalg.norm(a)
    if scale > 0.0 and np.linalg.norm(a - a.T) > 1e-8 * scale:
        raise NotSPD("matrix is not symmetric")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotSPD(str(exc)) from exc
    # forward/back substitution
    y = np.linalg.solve(low, b)
    return np.linalg.solve(low.T, y)


def finite(x):
    return bool(np.all(np.isfinite(x)))
