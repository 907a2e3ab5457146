"""Collision primitives: signed point distance with outward normals.

Every shape answers signed_distance(point) -> (distance, normal) with
negative distance meaning penetration; the normal always points from
the shape surface toward the outside, so pushing a point by
-distance * normal resolves it. Shapes are stored in world coordinates
and updated by whoever owns the body they follow.
"""

from dataclasses import dataclass, field

import numpy as np

from .mathcore import quat_conj, quat_rotate


@dataclass
class Plane:
    """Half-space boundary: points with normal . x < offset are inside."""

    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    offset: float = 0.0

    def signed_distance(self, p):
        return float(self.normal @ p - self.offset), self.normal

    def signed_distance_batch(self, x):
        dist = x @ self.normal - self.offset
        return dist, np.broadcast_to(self.normal, x.shape)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float

    def signed_distance(self, p):
        d = p - self.center
        dist = np.linalg.norm(d)
        if dist < 1e-12:
            return -self.radius, np.array([0.0, 1.0, 0.0])
        return float(dist - self.radius), d / dist

    def signed_distance_batch(self, x):
        d = x - self.center
        dist = np.linalg.norm(d, axis=1)
        safe = np.maximum(dist, 1e-12)
        return dist - self.radius, d / safe[:, None]


@dataclass
class Capsule:
    a: np.ndarray  # segment start
    b: np.ndarray  # segment end
    radius: float

    def signed_distance(self, p):
        ab = self.b - self.a
        denom = ab @ ab
        t = 0.0 if denom < 1e-18 else float(np.clip((p - self.a) @ ab / denom, 0.0, 1.0))
        closest = self.a + t * ab
        d = p - closest
        dist = np.linalg.norm(d)
        if dist < 1e-12:
            n = np.cross(ab, [1.0, 0.0, 0.0])
            if np.linalg.norm(n) < 1e-9:
                n = np.cross(ab, [0.0, 1.0, 0.0])
            n = n / np.linalg.norm(n)
            return -self.radius, n
        return float(dist - self.radius), d / dist

    def signed_distance_batch(self, x):
        ab = self.b - self.a
        denom = ab @ ab
        if denom < 1e-18:
            t = np.zeros(len(x))
        else:
            t = np.clip((x - self.a) @ ab / denom, 0.0, 1.0)
        closest = self.a + t[:, None] * ab
        d = x - closest
        dist = np.linalg.norm(d, axis=1)
        safe = np.maximum(dist, 1e-12)
        return dist - self.radius, d / safe[:, None]


@dataclass
class Box:
    center: np.ndarray
    half: np.ndarray  # half extents
    rot: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def signed_distance(self, p):
        local = quat_rotate(quat_conj(self.rot), p - self.center)
        q = np.abs(local) - self.half
        if np.any(q > 0.0):
            outside = np.maximum(q, 0.0)
            dist = np.linalg.norm(outside)
            # gradient: from the clamped surface point toward p
            surf = np.clip(local, -self.half, self.half)
            n_local = local - surf
            n_local = n_local / max(np.linalg.norm(n_local), 1e-12)
            return float(dist), quat_rotate(self.rot, n_local)
        k = int(np.argmax(q))  # least-deep face
        n_local = np.zeros(3)
        n_local[k] = np.sign(local[k]) if local[k] != 0.0 else 1.0
        return float(q[k]), quat_rotate(self.rot, n_local)

    def corners(self):
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=float,
        )
        return self.center + quat_rotate(self.rot, signs * self.half)


@dataclass
class Bowl:
    """Thin hemispherical shell that opens upward along `up`. Points
    inside the cavity are pushed back toward the middle, points outside
    the shell are pushed away from it, so something held underneath the
    bowl is in free space rather than inside a solid."""

    center: np.ndarray  # center of the rim sphere
    radius: float  # inner radius of the cavity
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def signed_distance(self, p):
        d = p - self.center
        dist = np.linalg.norm(d)
        if d @ self.up >= 0.0 and dist > 1e-12:
            # above the rim plane: treat the rim circle as the surface
            radial = d - (d @ self.up) * self.up
            rn = np.linalg.norm(radial)
            if rn < 1e-12:
                return float(self.radius), self.up.copy()
            rim_pt = self.center + radial / rn * self.radius
            dd = p - rim_pt
            ddn = np.linalg.norm(dd)
            if ddn < 1e-12:
                return 0.0, self.up.copy()
            return float(ddn), dd / ddn
        if dist < 1e-12:
            return float(self.radius), self.up.copy()
        if dist > self.radius:
            # below the rim and beyond the shell: outside the bowl
            return float(dist - self.radius), d / dist
        # inside the cavity: distance to the shell, normal points inward
        return float(self.radius - dist), -d / dist


def segment_closest_points(p1, q1, p2, q2):
    """Closest points between segments [p1,q1] and [p2,q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a < 1e-18 and e < 1e-18:
        return p1, p2
    if a < 1e-18:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e < 1e-18:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)
    return p1 + s * d1, p2 + t * d2
