"""Position-based soft bodies with compliant constraints.

Each substep predicts particle positions under gravity, then runs a
fixed number of Gauss-Seidel sweeps over the constraints in a fixed
order (stretch, volume, attachment, collision), always iterating in
index order so results are reproducible bit for bit. A constraint with
compliance alpha and accumulated multiplier lam updates as

    dlam = (-C - at * lam) / (sum_i w_i |grad_i|^2 + at),  at = alpha / dt^2
    x_i += w_i * dlam * grad_i

with at = 0 recovering a rigid constraint. Collision constraints are
unilateral: their multiplier never goes negative. Constraint reaction
forces are recovered as lam * |grad| / dt^2 and accumulated per
particle for inspection; `normalized_force_map` rescales the
accumulated magnitudes by their maximum into [0, 1].

Particles with zero inverse mass are kinematic: constraints never move
them, but attachment targets and direct writes do.
"""

from dataclasses import dataclass, field

import numpy as np

from .mathcore import cross3, quat_rotate


class NonFiniteParticle(Exception):
    pass


class DanglingAttachment(Exception):
    """An attachment references a particle index outside the mesh."""


@dataclass
class SoftBody:
    x: np.ndarray  # (P, 3) positions
    v: np.ndarray  # (P, 3) velocities
    inv_mass: np.ndarray  # (P,)
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    edge_rest: np.ndarray = field(default_factory=lambda: np.zeros(0))
    edge_alpha: float = 1e-6
    tets: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=int))
    tet_rest: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tet_alpha: float = 0.0
    attach_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    attach_target: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    attach_alpha: float = 0.0
    attach_local: list = field(default_factory=list)  # (joint_id, local_offset)
    particle_force: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if len(self.attach_idx) and (
            self.attach_idx.min() < 0 or self.attach_idx.max() >= len(self.x)
        ):
            raise DanglingAttachment("attachment index outside particle range")
        if self.particle_force.shape != (len(self.x),):
            self.particle_force = np.zeros(len(self.x))

    def total_mass(self):
        m = np.zeros(len(self.x))
        nz = self.inv_mass > 0
        m[nz] = 1.0 / self.inv_mass[nz]
        return float(m.sum())

    def momentum(self):
        nz = self.inv_mass > 0
        return (self.v[nz] / self.inv_mass[nz, None]).sum(axis=0)


def tet_volume(x0, x1, x2, x3):
    return float(cross3(x1 - x0, x2 - x0) @ (x3 - x0)) / 6.0


def mesh_volume(body):
    return sum(
        tet_volume(*(body.x[i] for i in tet)) for tet in body.tets
    )


def _tet_grads(p0, p1, p2, p3):
    g1 = cross3(p2 - p0, p3 - p0) / 6.0
    g2 = cross3(p3 - p0, p1 - p0) / 6.0
    g3 = cross3(p1 - p0, p2 - p0) / 6.0
    return -(g1 + g2 + g3), g1, g2, g3


def _solve_distance(body, x, lam, at):
    # scalar arithmetic: this loop dominates solve time and per-element
    # numpy calls are an order of magnitude slower
    edges = body.edges
    rest = body.edge_rest
    inv_mass = body.inv_mass
    for c in range(len(edges)):
        i, j = edges[c]
        wi, wj = inv_mass[i], inv_mass[j]
        wsum = wi + wj
        if wsum == 0.0:
            continue
        xi, xj = x[i], x[j]
        dx = xi[0] - xj[0]
        dy = xi[1] - xj[1]
        dz = xi[2] - xj[2]
        dist = (dx * dx + dy * dy + dz * dz) ** 0.5
        if dist < 1e-12:
            continue
        cval = dist - rest[c]
        dlam = (-cval - at * lam[c]) / (wsum + at)
        lam[c] += dlam
        s = dlam / dist
        nx, ny, nz = dx * s, dy * s, dz * s
        xi[0] += wi * nx
        xi[1] += wi * ny
        xi[2] += wi * nz
        xj[0] -= wj * nx
        xj[1] -= wj * ny
        xj[2] -= wj * nz


def _solve_volume(body, x, lam, at):
    for c in range(len(body.tets)):
        ids = body.tets[c]
        p0, p1, p2, p3 = x[ids[0]], x[ids[1]], x[ids[2]], x[ids[3]]
        grads = _tet_grads(p0, p1, p2, p3)
        w = body.inv_mass[ids]
        denom = sum(w[k] * (grads[k] @ grads[k]) for k in range(4)) + at
        if denom == 0.0:
            continue
        cval = tet_volume(p0, p1, p2, p3) - body.tet_rest[c]
        dlam = (-cval - at * lam[c]) / denom
        lam[c] += dlam
        for k in range(4):
            x[ids[k]] += w[k] * dlam * grads[k]


def _solve_attachments(body, x, lam, at):
    for c in range(len(body.attach_idx)):
        i = body.attach_idx[c]
        wi = body.inv_mass[i]
        if wi == 0.0:
            x[i] = body.attach_target[c]  # pinned particles follow exactly
            continue
        d = x[i] - body.attach_target[c]
        dist = np.sqrt(d @ d)
        if dist < 1e-12:
            continue
        n = d / dist
        dlam = (-dist - at * lam[c]) / (wi + at)
        lam[c] += dlam
        x[i] += wi * dlam * n


def _solve_collisions(body, x, colliders, lam_map):
    # resolutions against a static collider are independent per particle,
    # so detection can be batched without changing the sweep result
    for ci, collider in enumerate(colliders):
        batch = getattr(collider, "signed_distance_batch", None)
        if batch is not None:
            dist, normals = batch(x)
            hits = np.nonzero((dist < 0.0) & (body.inv_mass > 0.0))[0]
            for i in hits:
                key = (ci, int(i))
                lam = lam_map.get(key, 0.0)
                dlam = -dist[i] / body.inv_mass[i]
                if lam + dlam < 0.0:
                    dlam = -lam
                lam_map[key] = lam + dlam
                x[i] += body.inv_mass[i] * dlam * normals[i]
            continue
        for i in range(len(x)):
            if body.inv_mass[i] == 0.0:
                continue
            depth, n = collider.signed_distance(x[i])
            if depth >= 0.0:
                continue
            key = (ci, i)
            lam = lam_map.get(key, 0.0)
            dlam = -depth / body.inv_mass[i]
            # unilateral: accumulated multiplier stays non-negative
            if lam + dlam < 0.0:
                dlam = -lam
            lam_map[key] = lam + dlam
            x[i] += body.inv_mass[i] * dlam * n


def _gather_forces(body, x, lam_e, lam_t, lam_a, lam_c, h2):
    """Reaction force magnitude per particle from final multipliers."""
    forces = np.zeros(len(x))
    for c in range(len(body.edges)):
        f = abs(lam_e[c]) / h2  # distance gradients are unit vectors
        forces[body.edges[c, 0]] += f
        forces[body.edges[c, 1]] += f
    for c in range(len(body.tets)):
        ids = body.tets[c]
        grads = _tet_grads(x[ids[0]], x[ids[1]], x[ids[2]], x[ids[3]])
        for k in range(4):
            forces[ids[k]] += abs(lam_t[c]) * np.sqrt(grads[k] @ grads[k]) / h2
    for c in range(len(body.attach_idx)):
        forces[body.attach_idx[c]] += abs(lam_a[c]) / h2
    for (_, i), lam in lam_c.items():
        forces[i] += lam / h2
    return forces


def xpbd_step(body, dt, substeps=4, iterations=20, gravity=(0.0, -9.81, 0.0), colliders=()):
    """Advance the soft body by dt. Returns the per-particle force map
    (reaction magnitudes from the final substep)."""
    g = np.asarray(gravity, dtype=float)
    h = dt / substeps
    h2 = h * h
    forces = np.zeros(len(body.x))
    free = body.inv_mass > 0.0
    for _ in range(substeps):
        x_prev = body.x.copy()
        x = body.x + h * body.v
        x[free] += h2 * g
        lam_e = np.zeros(len(body.edges))
        lam_t = np.zeros(len(body.tets))
        lam_a = np.zeros(len(body.attach_idx))
        lam_c = {}
        at_e = body.edge_alpha / h2
        at_t = body.tet_alpha / h2
        at_a = body.attach_alpha / h2
        for _ in range(iterations):
            _solve_distance(body, x, lam_e, at_e)
            _solve_volume(body, x, lam_t, at_t)
            _solve_attachments(body, x, lam_a, at_a)
            _solve_collisions(body, x, colliders, lam_c)
        forces = _gather_forces(body, x, lam_e, lam_t, lam_a, lam_c, h2)
        body.v = (x - x_prev) / h
        body.v[~free] = 0.0
        body.x = x
    if not np.all(np.isfinite(body.x)):
        raise NonFiniteParticle("soft body diverged")
    body.particle_force = forces
    return forces


def normalized_force_map(body):
    peak = body.particle_force.max() if len(body.particle_force) else 0.0
    if peak <= 0.0:
        return np.zeros_like(body.particle_force)
    return body.particle_force / peak


# ---------------------------------------------------------------------------
# procedural meshes

def make_rope(n_segments, length, mass, alpha=0.0):
    n = n_segments + 1
    x = np.zeros((n, 3))
    x[:, 0] = np.linspace(0.0, length, n)
    inv_mass = np.full(n, n / mass)
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    rest = np.full(n_segments, length / n_segments)
    return SoftBody(
        x=x, v=np.zeros_like(x), inv_mass=inv_mass,
        edges=edges, edge_rest=rest, edge_alpha=alpha,
    )


_CUBE_TETS = [
    (0, 1, 3, 7), (0, 1, 7, 5), (0, 5, 7, 4),
    (0, 3, 2, 7), (0, 2, 6, 7), (0, 6, 4, 7),
]


def make_slab(nx, ny, nz, size, mass, edge_alpha=1e-6, tet_alpha=0.0):
    """Axis-aligned block of (nx, ny, nz) cells, each split into six tets."""
    sx, sy, sz = size
    xs = np.linspace(0, sx, nx + 1)
    ys = np.linspace(0, sy, ny + 1)
    zs = np.linspace(0, sz, nz + 1)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corner = [
                    vid(i, j, k), vid(i + 1, j, k), vid(i, j + 1, k),
                    vid(i + 1, j + 1, k), vid(i, j, k + 1), vid(i + 1, j, k + 1),
                    vid(i, j + 1, k + 1), vid(i + 1, j + 1, k + 1),
                ]
                for t in _CUBE_TETS:
                    tet = [corner[a] for a in t]
                    if tet_volume(*(pts[v] for v in tet)) < 0:
                        tet[2], tet[3] = tet[3], tet[2]
                    tets.append(tet)
    tets = np.array(tets, dtype=int)

    edge_set = set()
    for tet in tets:
        for a in range(4):
            for b in range(a + 1, 4):
                edge_set.add((min(tet[a], tet[b]), max(tet[a], tet[b])))
    edges = np.array(sorted(edge_set), dtype=int)
    rest = np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)
    rest_vol = np.array([tet_volume(*(pts[v] for v in tet)) for tet in tets])
    n = len(pts)
    return SoftBody(
        x=pts, v=np.zeros_like(pts), inv_mass=np.full(n, n / mass),
        edges=edges, edge_rest=rest, edge_alpha=edge_alpha,
        tets=tets, tet_rest=rest_vol, tet_alpha=tet_alpha,
    )


def make_capsule_shell(radius, length, rings, segs, mass, alpha=1e-6):
    """Open-ended tube of cross-braced rings along the y axis."""
    pts = []
    for r in range(rings):
        y = length * r / (rings - 1)
        for s in range(segs):
            ang = 2 * np.pi * s / segs
            pts.append([radius * np.cos(ang), y, radius * np.sin(ang)])
    pts = np.array(pts)
    edges = set()

    def vid(r, s):
        return r * segs + s % segs

    for r in range(rings):
        for s in range(segs):
            edges.add(tuple(sorted((vid(r, s), vid(r, s + 1)))))
            if r + 1 < rings:
                edges.add(tuple(sorted((vid(r, s), vid(r + 1, s)))))
                edges.add(tuple(sorted((vid(r, s), vid(r + 1, s + 1)))))
    edges = np.array(sorted(edges), dtype=int)
    rest = np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)
    n = len(pts)
    return SoftBody(
        x=pts, v=np.zeros_like(pts), inv_mass=np.full(n, n / mass),
        edges=edges, edge_rest=rest, edge_alpha=alpha,
    )


# ---------------------------------------------------------------------------
# skeleton coupling

def attach_to_skeleton(body, model, transforms, particle_indices, joint_name, alpha=0.0):
    """Bind particles to a skeleton joint frame at their current offsets.

    The bound particles acquire attachment constraints whose targets
    follow the joint when `update_attachments` is called with fresh
    transforms.
    """
    i = model.index.get(joint_name)
    if i is None:
        raise DanglingAttachment(f"no joint named {joint_name!r}")
    t = transforms[i]
    inv = t.inverse()
    idx = list(body.attach_idx)
    targets = list(body.attach_target)
    for p in particle_indices:
        if not 0 <= p < len(body.x):
            raise DanglingAttachment(f"particle {p} outside mesh")
        local = inv.apply(body.x[p])
        body.attach_local.append((i, local))
        idx.append(p)
        targets.append(body.x[p].copy())
    body.attach_idx = np.array(idx, dtype=int)
    body.attach_target = np.array(targets).reshape(-1, 3)
    body.attach_alpha = alpha


def update_attachments(body, transforms):
    for c, (joint, local) in enumerate(body.attach_local):
        t = transforms[joint]
        body.attach_target[c] = t.pos + quat_rotate(t.rot, local)
