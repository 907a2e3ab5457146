"""Rigid multibody dynamics for fixed-base kinematic trees.

Inverse dynamics is a recursive Newton-Euler pass in world coordinates.
Forward dynamics assembles the mass matrix column by column from unit
accelerations (gravity off) plus a bias torque from a zero-acceleration
pass (gravity on), then solves the SPD system. Integration is
semi-implicit Euler: velocity first, then position, with hard joint
limit clamps that zero the joint velocity on contact with a bound.

Joint damping is a property of the link but is deliberately not part of
the inverse/forward dynamics equations; the stepper folds it into the
applied torque so the equations of motion stay pure.
"""

from dataclasses import dataclass, field

import numpy as np

from .mathcore import (
    cross3,
    QUAT_IDENTITY,
    Transform,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    quat_to_matrix,
    solve_spd,
    transform_identity,
)


class NonFiniteState(Exception):
    """Integration produced NaN or infinity; the step is rejected."""


@dataclass
class Link:
    name: str
    parent: int  # index of parent link, -1 for the base
    joint_type: str  # revolute | prismatic | fixed
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    origin_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    origin_rot: np.ndarray = field(default_factory=lambda: QUAT_IDENTITY.copy())
    mass: float = 0.0
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inertia: np.ndarray = field(default_factory=lambda: np.zeros(3))  # principal, link frame
    limits: tuple | None = None  # (lower, upper) or None for unlimited
    damping: float = 0.0
    group: str | None = None
    collider: object = None  # UrdfGeometry or None
    collider_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))


class ArticulatedBody:
    def __init__(self, links, base_transform=None):
        self.links = list(links)
        for i, ln in enumerate(self.links):
            if ln.parent >= i:
                raise ValueError(f"link {ln.name!r}: parent must precede child")
        self.base = transform_identity() if base_transform is None else base_transform
        self.dof_index = np.full(len(self.links), -1, dtype=int)
        n = 0
        for i, ln in enumerate(self.links):
            if ln.joint_type != "fixed":
                self.dof_index[i] = n
                n += 1
        self.n_dof = n

    def zero_state(self):
        return DynState(q=np.zeros(self.n_dof), qd=np.zeros(self.n_dof))

    def limit_arrays(self):
        lo = np.full(self.n_dof, -np.inf)
        hi = np.full(self.n_dof, np.inf)
        for i, ln in enumerate(self.links):
            d = self.dof_index[i]
            if d >= 0 and ln.limits is not None:
                lo[d], hi[d] = ln.limits
        return lo, hi

    def damping_array(self):
        out = np.zeros(self.n_dof)
        for i, ln in enumerate(self.links):
            d = self.dof_index[i]
            if d >= 0:
                out[d] = ln.damping
        return out


@dataclass
class DynState:
    q: np.ndarray
    qd: np.ndarray

    def copy(self):
        return DynState(q=self.q.copy(), qd=self.qd.copy())


def from_urdf(model, base_transform=None):
    """Build an ArticulatedBody from a parsed URDF tree."""
    from .mathcore import quat_from_rpy

    child_joints = {}
    children = set()
    for j in model.joints:
        child_joints[j.child] = j
        children.add(j.child)
    roots = [name for name in model.links if name not in children]
    if len(roots) != 1:
        raise ValueError(f"expected one root link, found {roots}")

    order = [roots[0]]
    remaining = [j for j in model.joints]
    while remaining:
        progressed = False
        for j in list(remaining):
            if j.parent in order:
                order.append(j.child)
                remaining.remove(j)
                progressed = True
        if not progressed:
            raise ValueError("URDF joints do not form a connected tree")

    links = []
    index = {}
    for name in order:
        ul = model.links[name]
        j = child_joints.get(name)
        if j is None:  # root link is welded to the world
            link = Link(name=name, parent=-1, joint_type="fixed")
        else:
            link = Link(
                name=name,
                parent=index[j.parent],
                joint_type=j.kind,
                axis=j.axis / np.linalg.norm(j.axis),
                origin_pos=j.origin_xyz.astype(float),
                origin_rot=quat_from_rpy(*j.origin_rpy),
                limits=None if j.kind == "fixed" else (j.lower, j.upper),
                damping=j.damping,
            )
        link.mass = ul.mass
        link.com = ul.com.astype(float)
        link.inertia = ul.inertia.astype(float)
        link.collider = ul.collision
        link.collider_origin = ul.collision_origin.astype(float)
        index[name] = len(links)
        links.append(link)
    return ArticulatedBody(links, base_transform)


def link_transforms(body, q):
    """World transform and world joint axis for every link."""
    out = []
    for i, ln in enumerate(body.links):
        parent_t = body.base if ln.parent < 0 else out[ln.parent][0]
        jb = parent_t.compose(Transform(rot=ln.origin_rot, pos=ln.origin_pos))
        s = quat_rotate(jb.rot, ln.axis)
        d = body.dof_index[i]
        if ln.joint_type == "revolute":
            t = Transform(rot=quat_mul(jb.rot, quat_from_axis_angle(ln.axis, q[d])), pos=jb.pos)
        elif ln.joint_type == "prismatic":
            t = Transform(rot=jb.rot, pos=jb.pos + s * q[d])
        else:
            t = jb
        out.append((t, s))
    return out


def _pass_kinematics(body, q, qd, qdd):
    """Forward pass: world pose, axis, velocities and accelerations."""
    n = len(body.links)
    tf = link_transforms(body, q)
    w = np.zeros((n, 3))
    al = np.zeros((n, 3))
    v = np.zeros((n, 3))
    a = np.zeros((n, 3))
    for i, ln in enumerate(body.links):
        t, s = tf[i]
        if ln.parent < 0:
            wp = alp = vp = ap = np.zeros(3)
            op = body.base.pos
        else:
            p = ln.parent
            wp, alp, vp, ap = w[p], al[p], v[p], a[p]
            op = tf[p][0].pos
        r = t.pos - op
        d = body.dof_index[i]
        w[i] = wp
        al[i] = alp
        v[i] = vp + cross3(wp, r)
        a[i] = ap + cross3(alp, r) + cross3(wp, cross3(wp, r))
        if ln.joint_type == "revolute":
            w[i] = wp + s * qd[d]
            al[i] = alp + s * qdd[d] + cross3(wp, s) * qd[d]
        elif ln.joint_type == "prismatic":
            v[i] = v[i] + s * qd[d]
            a[i] = a[i] + s * qdd[d] + 2.0 * cross3(wp, s * qd[d])
    return tf, w, al, v, a


def inverse_dynamics(body, q, qd, qdd, gravity, f_ext=None, return_wrenches=False):
    """Joint torques that realize qdd at state (q, qd).

    f_ext: optional per-link (force, torque) world wrenches applied at
    the link COM. With return_wrenches, also returns the transmitted
    joint wrench per link as (force, torque about the joint origin).
    """
    g = np.asarray(gravity, dtype=float)
    n = len(body.links)
    tf, w, al, _, a = _pass_kinematics(body, q, qd, qdd)

    F = np.zeros((n, 3))
    N = np.zeros((n, 3))
    crel = np.zeros((n, 3))
    for i, ln in enumerate(body.links):
        t, _ = tf[i]
        crel[i] = quat_rotate(t.rot, ln.com)
        ac = (
            a[i]
            + cross3(al[i], crel[i])
            + cross3(w[i], cross3(w[i], crel[i]))
        )
        rm = quat_to_matrix(t.rot)
        iw = rm @ np.diag(ln.inertia) @ rm.T
        F[i] = ln.mass * (ac - g)
        N[i] = iw @ al[i] + cross3(w[i], iw @ w[i])
        if f_ext is not None and f_ext[i] is not None:
            fe, ne = f_ext[i]
            F[i] -= np.asarray(fe, dtype=float)
            N[i] -= np.asarray(ne, dtype=float)

    f = np.zeros((n, 3))
    nn = np.zeros((n, 3))
    tau = np.zeros(body.n_dof)
    for i in range(n - 1, -1, -1):
        ln = body.links[i]
        f[i] += F[i]
        nn[i] += N[i] + cross3(crel[i], F[i])
        d = body.dof_index[i]
        _, s = tf[i]
        if ln.joint_type == "revolute":
            tau[d] = s @ nn[i]
        elif ln.joint_type == "prismatic":
            tau[d] = s @ f[i]
        if ln.parent >= 0:
            p = ln.parent
            r = tf[i][0].pos - tf[p][0].pos
            f[p] += f[i]
            nn[p] += nn[i] + cross3(r, f[i])
    if return_wrenches:
        return tau, list(zip(f, nn))
    return tau


def _skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def mass_matrix(body, q):
    """Joint-space mass matrix by composite rigid bodies.

    Spatial quantities are referenced to the world origin: motion
    vectors are (angular; linear velocity of the point at the origin),
    so a revolute joint at p with axis s has subspace (s; p x s). One
    backward accumulation beats assembling columns from n inverse
    dynamics passes, which matters for many-link bodies.
    """
    tfs = link_transforms(body, q)
    nb = len(body.links)
    comp = np.zeros((nb, 6, 6))
    sub = np.zeros((nb, 6))
    for i, ln in enumerate(body.links):
        tf, axis = tfs[i]
        if ln.mass > 0.0 or np.any(ln.inertia > 0.0):
            rot = quat_to_matrix(tf.rot)
            cx = _skew(tf.apply(ln.com))
            comp[i, :3, :3] = rot @ np.diag(ln.inertia) @ rot.T - ln.mass * cx @ cx
            comp[i, :3, 3:] = ln.mass * cx
            comp[i, 3:, :3] = -ln.mass * cx
            comp[i, 3:, 3:] = ln.mass * np.eye(3)
        if ln.joint_type == "revolute":
            sub[i, :3] = axis
            sub[i, 3:] = cross3(tf.pos, axis)
        elif ln.joint_type == "prismatic":
            sub[i, 3:] = axis
    for i in range(nb - 1, 0, -1):
        p = body.links[i].parent
        if p >= 0:
            comp[p] += comp[i]
    n = body.n_dof
    m = np.zeros((n, n))
    for i in range(nb - 1, -1, -1):
        di = body.dof_index[i]
        if di < 0:
            continue
        f = comp[i] @ sub[i]
        m[di, di] = sub[i] @ f
        j = body.links[i].parent
        while j >= 0:
            dj = body.dof_index[j]
            if dj >= 0:
                m[di, dj] = m[dj, di] = sub[j] @ f
            j = body.links[j].parent
    return m


def bias_torques(body, q, qd, gravity, f_ext=None):
    return inverse_dynamics(body, q, qd, np.zeros(body.n_dof), gravity, f_ext)


def forward_dynamics(body, q, qd, tau, gravity, f_ext=None):
    """Joint accelerations from applied torques (composite RNE columns)."""
    c = bias_torques(body, q, qd, gravity, f_ext)
    m = mass_matrix(body, q)
    return solve_spd(m, np.asarray(tau, dtype=float) - c)


def step(body, state, tau, dt, gravity, f_ext=None):
    """Semi-implicit Euler step with joint damping and hard limit clamps.

    Damping enters as torque -d*qd using the pre-step velocity. When a
    position clamp engages, the joint velocity is zeroed so the state
    stays on the bound instead of chattering.
    """
    tau = np.asarray(tau, dtype=float) - body.damping_array() * state.qd
    qdd = forward_dynamics(body, state.q, state.qd, tau, gravity, f_ext)
    qd = state.qd + qdd * dt
    q = state.q + qd * dt
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
        raise NonFiniteState("joint state diverged")
    lo, hi = body.limit_arrays()
    below = q < lo
    above = q > hi
    q = np.clip(q, lo, hi)
    qd = np.where(below | above, 0.0, qd)
    return DynState(q=q, qd=qd)


def joint_ft_sensor(body, q, qd, qdd, gravity, f_ext=None):
    """Transmitted wrench per joint: (force, torque about joint origin)."""
    _, wrenches = inverse_dynamics(
        body, q, qd, qdd, gravity, f_ext, return_wrenches=True
    )
    return wrenches


def total_energy(body, q, qd, gravity):
    """Kinetic plus potential energy of the whole tree."""
    g = np.asarray(gravity, dtype=float)
    tf, w, _, v, _ = _pass_kinematics(body, q, qd, np.zeros(body.n_dof))
    e = 0.0
    for i, ln in enumerate(body.links):
        t, _ = tf[i]
        cw = quat_rotate(t.rot, ln.com)
        vc = v[i] + cross3(w[i], cw)
        rm = quat_to_matrix(t.rot)
        iw = rm @ np.diag(ln.inertia) @ rm.T
        e += 0.5 * ln.mass * (vc @ vc) + 0.5 * w[i] @ (iw @ w[i])
        e -= ln.mass * (g @ (t.pos + cw))
    return e
