"""Scene assembly and the stepping loop.

A World holds named entities: static and kinematic collision shapes,
dynamic rigid bodies, position-controlled robot arms, avatars, hinged or
sliding props, and soft bodies. Each tick runs a fixed order:

    commands -> avatars (muscles + body) -> robots -> rigid bodies ->
    soft bodies -> contact detection -> sensors

Contacts are detected from the state the kinematic passes produce and
their forces enter the same tick's rigid body integration, so there is
no frame of lag between penetration and response; with the fixed
iteration order this keeps runs bit-reproducible.

Contacts use a penalty model: normal force k_p * depth - k_d * v_n
(clamped to be repulsive), Coulomb-capped viscous friction
min(k_f |v_t|, mu |F_n|) opposing slip. Scenes load from JSON; relative
asset references resolve against the scene file, then the bundled
assets root.
"""

import json
import os

import numpy as np

from .avatar import Avatar, load_profile
from .colliders import Bowl, Box, Capsule, Plane, Sphere
from .dynamics import NonFiniteState, from_urdf, link_transforms
from .mathcore import (
    cross3,
    Transform,
    quat_from_axis_angle,
    quat_from_rpy,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_matrix,
)
from .skeleton import _SKIN_BONES
from .softbody import make_capsule_shell, make_rope, make_slab, xpbd_step
from .urdf import parse_urdf

CONTACT_KP = 1.0e4
CONTACT_KD = 100.0
FRICTION_MU = 0.6
FRICTION_KF = 1.0e3


class ParseError(Exception):
    """Scene description is malformed."""


class MissingAsset(Exception):
    """Scene references a file that cannot be found."""


class DuplicateId(Exception):
    """Two entities share an id."""


class UnknownEntity(Exception):
    """Command or query addressed to an id the world does not have."""


def _vec(x, n=3):
    out = np.asarray(x, dtype=float)
    if out.shape != (n,):
        raise ParseError(f"expected {n} numbers, got {x!r}")
    return out


def _make_shape(spec, pos=None, rot=None):
    """Collider from a shape spec, optionally placed at pos/rot."""
    try:
        kind = spec["type"]
    except (TypeError, KeyError):
        raise ParseError(f"shape needs a type: {spec!r}")
    pos = np.zeros(3) if pos is None else np.asarray(pos, dtype=float)
    rot = np.array([1.0, 0.0, 0.0, 0.0]) if rot is None else np.asarray(rot, dtype=float)
    if kind == "plane":
        return Plane(normal=_vec(spec.get("normal", [0, 1, 0])), offset=float(spec.get("offset", 0.0)))
    if kind == "sphere":
        center = pos + quat_rotate(rot, _vec(spec.get("center", [0, 0, 0])))
        return Sphere(center=center, radius=float(spec["radius"]))
    if kind == "box":
        center = pos + quat_rotate(rot, _vec(spec.get("center", [0, 0, 0])))
        return Box(center=center, half=_vec(spec["half"]), rot=rot.copy())
    if kind == "capsule":
        a = pos + quat_rotate(rot, _vec(spec["a"]))
        b = pos + quat_rotate(rot, _vec(spec["b"]))
        return Capsule(a=a, b=b, radius=float(spec["radius"]))
    if kind == "bowl":
        center = pos + quat_rotate(rot, _vec(spec.get("center", [0, 0, 0])))
        return Bowl(center=center, radius=float(spec["radius"]), up=quat_rotate(rot, _vec(spec.get("up", [0, 1, 0]))))
    raise ParseError(f"unknown shape type {kind!r}")


def _shape_inertia(spec, mass):
    """Principal inertia about the center of mass for a shape spec."""
    kind = spec["type"]
    if kind == "sphere":
        r = float(spec["radius"])
        return np.full(3, 0.4 * mass * r * r)
    if kind == "box":
        h = _vec(spec["half"])
        full = 2.0 * h
        return mass / 12.0 * np.array([
            full[1] ** 2 + full[2] ** 2,
            full[0] ** 2 + full[2] ** 2,
            full[0] ** 2 + full[1] ** 2,
        ])
    if kind == "capsule":
        a, b, r = _vec(spec["a"]), _vec(spec["b"]), float(spec["radius"])
        length = np.linalg.norm(b - a) + 2 * r
        perp = mass * (length * length / 12.0 + r * r / 4.0)
        return np.array([perp, mass * r * r / 2.0, perp])
    raise ParseError(f"no inertia model for shape {kind!r}")


# ---------------------------------------------------------------------------
# entities


class StaticEntity:
    kind = "static"

    def __init__(self, eid, shape):
        self.eid = eid
        self.shape = shape

    def world_shape(self):
        return self.shape


class RigidEntity:
    """Free rigid body with a single collider, or a kinematic shape that
    commands move directly (infinite effective mass)."""

    kind = "rigid"

    def __init__(self, eid, shape_spec, mass, pos, rot=None, kinematic=False):
        self.eid = eid
        self.shape_spec = shape_spec
        self.mass = float(mass)
        self.inertia = _shape_inertia(shape_spec, self.mass) if not kinematic else np.ones(3)
        self.pos = _vec(pos)
        self.rot = np.array([1.0, 0.0, 0.0, 0.0]) if rot is None else quat_normalize(np.asarray(rot, dtype=float))
        self.vel = np.zeros(3)
        self.omega = np.zeros(3)
        self.kinematic = kinematic
        self._prev_pos = self.pos.copy()

    def world_shape(self):
        return _make_shape(self.shape_spec, self.pos, self.rot)

    def point_velocity(self, point):
        if self.kinematic:
            return self.vel
        return self.vel + cross3(self.omega, point - self.pos)


class RobotEntity:
    """Articulated arm with PD joint drives; kinematic for contact
    purposes (it imposes forces, contact forces register on its sensors
    but do not knock it around)."""

    kind = "robot"

    def __init__(self, eid, body, kp=50.0, kd=5.0, ee_link=None, ee_offset=None):
        self.eid = eid
        self.body = body
        self.state = body.zero_state()
        self.targets = np.zeros(body.n_dof)
        self.kp = float(kp)
        self.kd = float(kd)
        names = [ln.name for ln in body.links]
        self.ee_index = names.index(ee_link) if ee_link else len(names) - 1
        self.ee_offset = np.zeros(3) if ee_offset is None else _vec(ee_offset)
        self.ee_target = None
        self._tfs = link_transforms(body, self.state.q)
        self._prev_link_pos = np.array([t.pos for t, _ in self._tfs])
        self._shapes = None  # per-tick cache of world link colliders

    def ee_pos(self):
        return self._tfs[self.ee_index][0].apply(self.ee_offset)

    def _ik_step(self):
        """One damped-least-squares pull of the joint targets toward the
        Cartesian end effector target."""
        q = self.state.q
        ee = self.ee_pos()
        err = self.ee_target - ee
        if np.linalg.norm(err) < 1e-4:
            return
        cols = []
        for i, ln in enumerate(self.body.links):
            d = self.body.dof_index[i]
            if d < 0:
                continue
            tf, axis = self._tfs[i]
            if ln.joint_type == "revolute":
                cols.append((d, cross3(axis, ee - tf.pos)))
            else:
                cols.append((d, axis))
        jac = np.zeros((3, self.body.n_dof))
        for d, col in cols:
            jac[:, d] = col
        lam = 0.1
        core = jac @ jac.T + lam * lam * np.eye(3)
        dq = jac.T @ np.linalg.solve(core, err)
        peak = np.abs(dq).max()
        if peak > 0.15:
            dq *= 0.15 / peak
        lo, hi = self.body.limit_arrays()
        self.targets = np.clip(q + dq, lo, hi)

    def step(self, dt):
        if self.ee_target is not None:
            self._ik_step()
        q, qd = self.state.q, self.state.qd
        qdd = self.kp * (self.targets - q) - self.kd * qd
        qd = qd + dt * qdd
        q = q + dt * qd
        lo, hi = self.body.limit_arrays()
        hit = (q < lo) | (q > hi)
        q = np.clip(q, lo, hi)
        qd = np.where(hit, 0.0, qd)
        self.state.q, self.state.qd = q, qd
        # previous positions captured from the stale transforms before refresh
        self._prev_link_pos = np.array([t.pos for t, _ in self._tfs])
        self._tfs = link_transforms(self.body, q)
        self._shapes = None

    def link_velocity(self, index, dt):
        if dt <= 0.0:
            return np.zeros(3)
        return (self._tfs[index][0].pos - self._prev_link_pos[index]) / dt

    def link_shapes(self):
        """(link name, link index, world collider) for every collidable link."""
        if self._shapes is not None:
            return self._shapes
        out = []
        for i, ln in enumerate(self.body.links):
            if ln.collider is None:
                continue
            tf, _ = self._tfs[i]
            spec = {"type": ln.collider.kind}
            if ln.collider.kind == "sphere":
                spec["radius"] = ln.collider.size[0]
            elif ln.collider.kind == "box":
                spec["half"] = [s / 2.0 for s in ln.collider.size]
            elif ln.collider.kind == "capsule":
                r, half_len = ln.collider.size[0], ln.collider.size[1] / 2.0
                spec.update({"a": [0, -half_len, 0], "b": [0, half_len, 0], "radius": r})
            origin = tf.apply(ln.collider_origin)
            out.append((ln.name, i, _make_shape(spec, origin, tf.rot)))
        self._shapes = out
        return out


class AvatarEntity:
    """A patient. With animate=False the body is scenery: posture only
    changes through commands, and the muscle/dynamics pass is skipped
    (a held patient at rest is static; tasks that reposition the body do
    it with explicit pose commands)."""

    kind = "avatar"

    def __init__(self, eid, avatar, animate=True):
        self.eid = eid
        self.avatar = avatar
        self.animate = animate
        self._capsules = None  # rebuilt once per tick after the avatar moves

    def invalidate(self):
        self._capsules = None

    def capsules(self):
        """Body capsules from the skin bone table at the current pose."""
        if self._capsules is not None:
            return self._capsules
        model = self.avatar.model
        tfs = self.avatar.fk()
        out = []
        for bone, (child, radius) in _SKIN_BONES.items():
            a = tfs[model.joint_id(bone)].pos
            if child is None:  # head: ball centered halfway up the segment
                out.append((bone, Sphere(center=a + np.array([0.0, 0.08, 0.0]), radius=radius)))
                continue
            b = tfs[model.joint_id(child)].pos
            out.append((bone, Capsule(a=a, b=b, radius=radius)))
        self._capsules = out
        return out


class PropEntity:
    """Single degree of freedom mechanism: a shape on a hinge or slider.

    The joint coordinate is set kinematically (task couplings decide how
    it follows the robot); the world clamps it to its range."""

    kind = "prop"

    def __init__(self, eid, joint, axis, anchor, lo, hi, shape_spec, pos=0.0):
        if joint not in ("hinge", "slider"):
            raise ParseError(f"prop joint must be hinge or slider, got {joint!r}")
        self.eid = eid
        self.joint = joint
        self.axis = _vec(axis)
        self.axis /= np.linalg.norm(self.axis)
        self.anchor = _vec(anchor)
        self.lo, self.hi = float(lo), float(hi)
        self.shape_spec = shape_spec
        self.pos = float(pos)

    def set_pos(self, value):
        self.pos = float(np.clip(value, self.lo, self.hi))

    def world_shape(self):
        if self.joint == "hinge":
            rot = quat_from_axis_angle(axis=self.axis, angle=self.pos)
            return _make_shape(self.shape_spec, self.anchor, rot)
        return _make_shape(self.shape_spec, self.anchor + self.axis * self.pos)


class SoftEntity:
    kind = "soft"

    def __init__(self, eid, body, pinned=None, substeps=4, iterations=20):
        self.eid = eid
        self.body = body
        self.pinned = np.asarray(pinned if pinned is not None else [], dtype=int)
        self.substeps = int(substeps)
        self.iterations = int(iterations)


# ---------------------------------------------------------------------------
# contact generation

# sample points for shape A tested against shape B's signed distance:
# (point, effective radius) pairs


def _samples(shape):
    if isinstance(shape, Sphere):
        return [(shape.center, shape.radius)]
    if isinstance(shape, Capsule):
        mid = 0.5 * (shape.a + shape.b)
        return [(shape.a, shape.radius), (mid, shape.radius), (shape.b, shape.radius)]
    if isinstance(shape, Box):
        return [(c, 0.0) for c in shape.corners()]
    return []


def _pair_contacts(shape_a, shape_b):
    """Contacts pushing A out of B: (surface point, normal out of B, depth)."""
    out = []
    for p, r in _samples(shape_a):
        dist, normal = shape_b.signed_distance(p)
        pen = r - dist
        if pen > 0.0:
            out.append((p - normal * r, normal, pen))
    return out


def _collider_aabb(shape):
    """(lo, hi) bounds, or None for unbounded shapes."""
    if isinstance(shape, Sphere):
        return shape.center - shape.radius, shape.center + shape.radius
    if isinstance(shape, Capsule):
        lo = np.minimum(shape.a, shape.b) - shape.radius
        return lo, np.maximum(shape.a, shape.b) + shape.radius
    if isinstance(shape, Box):
        c = shape.corners()
        return c.min(axis=0), c.max(axis=0)
    if isinstance(shape, Bowl):
        return shape.center - shape.radius, shape.center + shape.radius
    return None


class World:
    def __init__(self, dt=1.0 / 240.0, gravity=(0.0, -9.81, 0.0), name="world",
                 contact_kp=CONTACT_KP, contact_kd=CONTACT_KD, mu=FRICTION_MU, kf=FRICTION_KF,
                 contact_substeps=4):
        self.dt = float(dt)
        self.gravity = np.asarray(gravity, dtype=float)
        self.name = name
        self.contact_kp = contact_kp
        self.contact_kd = contact_kd
        self.mu = mu
        self.kf = kf
        # contact damping is explicit; substeps keep kd * h below the
        # stability bound for light bodies and corner-torque modes
        self.contact_substeps = int(contact_substeps)
        self.time = 0.0
        self.tick = 0
        self.entities = {}
        self._order = []
        self._sensors = None
        self._log = None

    # -- assembly -----------------------------------------------------------

    def add(self, entity):
        if entity.eid in self.entities:
            raise DuplicateId(f"entity id {entity.eid!r} already present")
        self.entities[entity.eid] = entity
        self._order.append(entity.eid)
        return entity

    def entity(self, eid):
        try:
            return self.entities[eid]
        except KeyError:
            raise UnknownEntity(f"no entity {eid!r}")

    def open_log(self, path):
        self._log = open(path, "w")

    def close_log(self):
        if self._log:
            self._log.close()
            self._log = None

    # -- commands -----------------------------------------------------------

    def _apply_commands(self, commands):
        for eid, cmd in commands.items():
            ent = self.entity(eid)
            for key, value in cmd.items():
                if ent.kind == "avatar":
                    ent.invalidate()
                    if key == "joint_targets":
                        ent.avatar.set_joint_targets(value)
                    elif key == "activations":
                        ent.avatar.actuate(value)
                    elif key == "pose":
                        ent.avatar.set_pose(np.asarray(value, dtype=float))
                    elif key == "root_pos":
                        ent.avatar.set_root(Transform(pos=_vec(value)))
                    else:
                        raise ValueError(f"unknown avatar command {key!r}")
                elif ent.kind == "robot":
                    if key == "joint_targets":
                        names = [ln.name for ln in ent.body.links]
                        for jname, val in value.items():
                            if jname not in names:
                                raise ValueError(f"robot {eid}: no joint {jname!r}")
                            d = ent.body.dof_index[names.index(jname)]
                            if d < 0:
                                raise ValueError(f"robot {eid}: joint {jname!r} is fixed")
                            ent.targets[d] = float(val)
                    elif key == "ee_target":
                        ent.ee_target = None if value is None else _vec(value)
                    else:
                        raise ValueError(f"unknown robot command {key!r}")
                elif ent.kind == "rigid":
                    if key == "pos" and ent.kinematic:
                        ent.pos = _vec(value)
                    elif key == "rot" and ent.kinematic:
                        ent.rot = quat_normalize(np.asarray(value, dtype=float))
                    elif key == "vel" and not ent.kinematic:
                        ent.vel = _vec(value)
                    else:
                        raise ValueError(f"bad rigid command {key!r} for {eid}")
                elif ent.kind == "prop":
                    if key == "pos":
                        ent.set_pos(value)
                    else:
                        raise ValueError(f"unknown prop command {key!r}")
                elif ent.kind == "soft":
                    if key == "shift_pins":
                        ent.body.x[ent.pinned] += _vec(value)
                    else:
                        raise ValueError(f"unknown soft command {key!r}")
                else:
                    raise ValueError(f"entity {eid} ({ent.kind}) takes no commands")

    # -- stepping -----------------------------------------------------------

    def _soft_colliders(self):
        out = []
        for eid in self._order:
            ent = self.entities[eid]
            if ent.kind == "static":
                out.append(ent.world_shape())
            elif ent.kind == "rigid" and ent.kinematic:
                out.append(ent.world_shape())
            elif ent.kind == "prop":
                out.append(ent.world_shape())
            elif ent.kind == "robot":
                out.extend(s for _, _, s in ent.link_shapes())
            elif ent.kind == "avatar":
                out.extend(s for _, s in ent.capsules())
        return out

    def _integrate_rigid(self, ent, force, torque, h):
        ent.vel = ent.vel + h * (self.gravity + force / ent.mass)
        rotm = quat_to_matrix(ent.rot)
        iw = rotm @ np.diag(ent.inertia) @ rotm.T
        ent.omega = ent.omega + h * np.linalg.solve(iw, torque - cross3(ent.omega, iw @ ent.omega))
        ent.pos = ent.pos + h * ent.vel
        wn = np.linalg.norm(ent.omega)
        if wn > 1e-12:
            spin = quat_from_axis_angle(axis=ent.omega / wn, angle=wn * h)
            ent.rot = quat_normalize(quat_mul(spin, ent.rot))
        if not (np.all(np.isfinite(ent.pos)) and np.all(np.isfinite(ent.vel))):
            raise NonFiniteState(f"rigid body {ent.eid} diverged")

    @staticmethod
    def _still(p):
        return np.zeros(3)

    def _collect_colliders(self):
        """(eid, sub-name, shape, velocity fn, dynamic entity or None, active).

        Active colliders seed contact pairs: free rigid bodies (they must
        be pushed out of everything) and robot links (their force sensors
        must register even against immovable geometry). Pairs with no
        active member, like an avatar resting on a bed, are skipped;
        posture control already holds the avatar up, and generating those
        forces would only pollute the sensors.
        """
        out = []
        for eid in self._order:
            ent = self.entities[eid]
            if ent.kind == "static":
                out.append((eid, None, ent.world_shape(), self._still, None, False))
            elif ent.kind == "rigid":
                dyn = None if ent.kinematic else ent
                out.append((eid, None, ent.world_shape(), ent.point_velocity, dyn, dyn is not None))
            elif ent.kind == "prop":
                out.append((eid, None, ent.world_shape(), self._still, None, False))
            elif ent.kind == "robot":
                for lname, li, shape in ent.link_shapes():
                    vel = ent.link_velocity(li, self.dt)
                    out.append((eid, lname, shape, (lambda v: lambda p: v)(vel), None, True))
            elif ent.kind == "avatar":
                for bone, shape in ent.capsules():
                    out.append((eid, bone, shape, self._still, None, False))
        return out

    def _contact_force(self, depth, v_rel, normal, m_eff, h):
        # cap the gains so a light body cannot be kicked past the
        # explicit-integration stability bound: k h^2/m and c h/m stay
        # small fractions regardless of the configured stiffness
        kp, kd, kf = self.contact_kp, self.contact_kd, self.kf
        if m_eff is not None:
            kp = min(kp, 0.1 * m_eff / (h * h))
            kd = min(kd, 0.3 * m_eff / h)
            kf = min(kf, 0.3 * m_eff / h)
        vn = float(v_rel @ normal)
        fn = kp * depth - kd * vn
        if fn <= 0.0:
            return None
        vt = v_rel - vn * normal
        st = np.linalg.norm(vt)
        force = fn * normal
        if st > 1e-9:
            ft = min(kf * st, self.mu * fn)
            force = force - ft * vt / st
        return force

    def _detect_contacts(self, cols, h):
        contacts = []
        forces = {}  # eid -> [force, torque]
        sub_forces = {}  # (eid, sub) -> force

        def credit(eid, sub, body, point, force):
            f, t = forces.setdefault(eid, [np.zeros(3), np.zeros(3)])
            f += force
            if body is not None:
                t += cross3(point - body.pos, force)
            if sub is not None:
                sub_forces[(eid, sub)] = sub_forces.get((eid, sub), np.zeros(3)) + force

        n = len(cols)
        for i in range(n):
            eid_a, sub_a, shape_a, vel_a, dyn_a, act_a = cols[i]
            if not act_a:
                continue
            for j in range(n):
                if i == j:
                    continue
                eid_b, sub_b, shape_b, vel_b, dyn_b, act_b = cols[j]
                if eid_a == eid_b:
                    continue
                # active pairs once, with the lower-index collider sampling
                if act_b and j < i:
                    continue
                pts = _pair_contacts(shape_a, shape_b)
                # box on box needs the reverse corners too
                if act_b and isinstance(shape_a, Box) and isinstance(shape_b, Box):
                    pts += [(p, -nrm, d) for p, nrm, d in _pair_contacts(shape_b, shape_a)]
                if dyn_a is not None and dyn_b is not None:
                    m_eff = dyn_a.mass * dyn_b.mass / (dyn_a.mass + dyn_b.mass)
                elif dyn_a is not None:
                    m_eff = dyn_a.mass
                elif dyn_b is not None:
                    m_eff = dyn_b.mass
                else:
                    m_eff = None
                for point, normal, depth in pts:
                    v_rel = vel_a(point) - vel_b(point)
                    force = self._contact_force(depth, v_rel, normal, m_eff, h)
                    if force is None:
                        continue
                    credit(eid_a, sub_a, dyn_a, point, force)
                    credit(eid_b, sub_b, dyn_b, point, -force)
                    contacts.append(
                        {
                            "a": eid_a,
                            "b": eid_b,
                            "point": point.tolist(),
                            "normal": normal.tolist(),
                            "force": float(np.linalg.norm(force)),
                        }
                    )
        return contacts, forces, sub_forces

    def _contact_substep_loop(self):
        """Detect contacts and integrate the free rigid bodies, several
        substeps per tick. Returns the last substep's contact list and
        the tick-averaged force accumulators for the sensors."""
        for eid in self._order:
            ent = self.entities[eid]
            if ent.kind == "rigid" and ent.kinematic:
                ent.vel = (ent.pos - ent._prev_pos) / self.dt
                ent._prev_pos = ent.pos.copy()
        cols = self._collect_colliders()
        dyn_rows = [k for k, c in enumerate(cols) if c[4] is not None]
        nsub = max(1, self.contact_substeps) if dyn_rows else 1
        h = self.dt / nsub
        zero = (np.zeros(3), np.zeros(3))
        forces_sum = {}
        subf_sum = {}
        contacts = []
        for _ in range(nsub):
            for k in dyn_rows:  # dynamic shapes move between substeps
                eid, sub, _, vfn, dyn, act = cols[k]
                cols[k] = (eid, sub, dyn.world_shape(), vfn, dyn, act)
            contacts, forces, sub_forces = self._detect_contacts(cols, h)
            for eid in self._order:
                ent = self.entities[eid]
                if ent.kind == "rigid" and not ent.kinematic:
                    f, t = forces.get(eid, zero)
                    self._integrate_rigid(ent, f, t, h)
            for eid, (f, t) in forces.items():
                acc_f, acc_t = forces_sum.setdefault(eid, [np.zeros(3), np.zeros(3)])
                acc_f += f
                acc_t += t
            for key, f in sub_forces.items():
                subf_sum[key] = subf_sum.get(key, np.zeros(3)) + f
        inv = 1.0 / nsub
        forces_avg = {eid: (f * inv, t * inv) for eid, (f, t) in forces_sum.items()}
        subf_avg = {key: f * inv for key, f in subf_sum.items()}
        return contacts, forces_avg, subf_avg

    def step(self, commands=None):
        if commands:
            self._apply_commands(commands)
        for eid in self._order:
            ent = self.entities[eid]
            if ent.kind == "avatar" and ent.animate:
                ent.avatar.step(self.dt)
                ent.invalidate()
        for eid in self._order:
            ent = self.entities[eid]
            if ent.kind == "robot":
                ent.step(self.dt)
        contacts, forces, sub_forces = self._contact_substep_loop()
        soft_cols = None
        for eid in self._order:
            ent = self.entities[eid]
            if ent.kind == "soft":
                if soft_cols is None:
                    soft_cols = self._soft_colliders()
                # broadphase: only colliders near the particle cloud
                lo = ent.body.x.min(axis=0) - 0.08
                hi = ent.body.x.max(axis=0) + 0.08
                near = []
                for sh in soft_cols:
                    bounds = _collider_aabb(sh)
                    if bounds is None or (np.all(bounds[0] <= hi) and np.all(bounds[1] >= lo)):
                        near.append(sh)
                xpbd_step(ent.body, self.dt, substeps=ent.substeps,
                          iterations=ent.iterations, colliders=near, gravity=self.gravity)
        self.time += self.dt
        self.tick += 1
        self._sensors = self._build_sensors(contacts, forces, sub_forces)
        if self._log:
            self._log.write(json.dumps(self._sensors) + "\n")
        return self._sensors

    # -- sensors ------------------------------------------------------------

    def _build_sensors(self, contacts, forces, sub_forces):
        ents = {}
        for eid in self._order:
            ent = self.entities[eid]
            f, t = forces.get(eid, (np.zeros(3), np.zeros(3)))
            if ent.kind == "rigid":
                ents[eid] = {
                    "kind": "rigid",
                    "pos": ent.pos.tolist(),
                    "rot": ent.rot.tolist(),
                    "vel": ent.vel.tolist(),
                    "omega": ent.omega.tolist(),
                    "contact_force": f.tolist(),
                }
            elif ent.kind == "robot":
                names = [ln.name for ln in ent.body.links]
                q = {}
                qd = {}
                for i, nm in enumerate(names):
                    d = ent.body.dof_index[i]
                    if d >= 0:
                        q[nm] = float(ent.state.q[d])
                        qd[nm] = float(ent.state.qd[d])
                ee_name = names[ent.ee_index]
                ents[eid] = {
                    "kind": "robot",
                    "q": q,
                    "qd": qd,
                    "ee_pos": ent.ee_pos().tolist(),
                    "ee_force": sub_forces.get((eid, ee_name), np.zeros(3)).tolist(),
                    "contact_force": f.tolist(),
                }
            elif ent.kind == "avatar":
                av = ent.avatar
                ents[eid] = {
                    "kind": "avatar",
                    "mode": av.mode,
                    "actuation": av.actuation,
                    "pose": av.pose.tolist(),
                    "root_pos": av.root.pos.tolist(),
                    "physiology": av.get_physiology(),
                    "muscle_forces": {m.name: float(fv) for m, fv in zip(av.muscles, av.last_forces)},
                    "contact_force": f.tolist(),
                }
            elif ent.kind == "prop":
                ents[eid] = {"kind": "prop", "joint": ent.joint, "pos": ent.pos}
            elif ent.kind == "soft":
                body = ent.body
                ents[eid] = {
                    "kind": "soft",
                    "n": int(len(body.x)),
                    "com": (body.x.mean(axis=0)).tolist(),
                    "peak_force": float(body.particle_force.max()) if len(body.particle_force) else 0.0,
                }
            else:
                ents[eid] = {"kind": ent.kind, "contact_force": f.tolist()}
        return {"time": self.time, "tick": self.tick, "contacts": contacts, "entities": ents}

    def read_sensors(self):
        if self._sensors is None:
            h = self.dt / max(1, self.contact_substeps)
            out = self._detect_contacts(self._collect_colliders(), h)
            self._sensors = self._build_sensors(*out)
        return self._sensors


# ---------------------------------------------------------------------------
# scene loading


def _assets_root():
    return os.path.join(os.path.dirname(__file__), "assets")


def _resolve_asset(ref, scene_path):
    roots = []
    if scene_path:
        roots.append(os.path.dirname(os.path.abspath(scene_path)))
    roots.append(_assets_root())
    for root in roots:
        cand = os.path.join(root, ref)
        if os.path.exists(cand):
            return cand
    raise MissingAsset(f"cannot find {ref!r} (searched {roots})")


_SOFT_FACTORIES = {
    "rope": make_rope,
    "slab": make_slab,
    "capsule_shell": make_capsule_shell,
}


def load_scene(src, scene_path=None):
    """Build a World from a scene dict, JSON string path, or file path."""
    if isinstance(src, str):
        scene_path = src
        try:
            with open(src) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise MissingAsset(f"no scene file {src!r}")
        except json.JSONDecodeError as e:
            raise ParseError(f"scene {src}: {e}")
    elif isinstance(src, dict):
        data = src
    else:
        raise ParseError(f"scene source must be a path or dict, got {type(src)}")

    world = World(
        dt=float(data.get("dt", 1.0 / 240.0)),
        gravity=data.get("gravity", (0.0, -9.81, 0.0)),
        name=data.get("name", "world"),
        contact_kp=float(data.get("contact", {}).get("kp", CONTACT_KP)),
        contact_kd=float(data.get("contact", {}).get("kd", CONTACT_KD)),
        mu=float(data.get("contact", {}).get("mu", FRICTION_MU)),
        kf=float(data.get("contact", {}).get("kf", FRICTION_KF)),
        contact_substeps=int(data.get("contact", {}).get("substeps", 4)),
    )
    for spec in data.get("entities", []):
        try:
            eid = spec["id"]
            kind = spec["kind"]
        except (TypeError, KeyError):
            raise ParseError(f"entity needs id and kind: {spec!r}")
        if kind == "static":
            world.add(StaticEntity(eid, _make_shape(spec["shape"], spec.get("pos"), _rpy_quat(spec))))
        elif kind == "rigid":
            world.add(
                RigidEntity(
                    eid,
                    spec["shape"],
                    mass=spec.get("mass", 1.0),
                    pos=spec.get("pos", (0, 0, 0)),
                    rot=_rpy_quat(spec),
                    kinematic=bool(spec.get("kinematic", False)),
                )
            )
        elif kind == "robot":
            path = _resolve_asset(spec["urdf"], scene_path)
            model = parse_urdf(path)
            base = Transform(pos=_vec(spec.get("pos", (0, 0, 0))), rot=_rpy_quat(spec) or np.array([1.0, 0, 0, 0]))
            body = from_urdf(model, base_transform=base)
            world.add(
                RobotEntity(
                    eid,
                    body,
                    kp=spec.get("kp", 50.0),
                    kd=spec.get("kd", 5.0),
                    ee_link=spec.get("ee_link"),
                    ee_offset=spec.get("ee_offset"),
                )
            )
        elif kind == "avatar":
            path = _resolve_asset(spec["profile"], scene_path)
            avatar = Avatar(load_profile(path), mode=spec.get("mode", "passive"),
                            actuation=spec.get("actuation", "musculoskeletal"))
            if "pos" in spec:
                avatar.set_root(Transform(pos=_vec(spec["pos"])))
            ent = world.add(AvatarEntity(eid, avatar, animate=bool(spec.get("animate", True))))
            if "pose" in spec:
                ent.avatar.set_pose(np.asarray(spec["pose"], dtype=float))
        elif kind == "prop":
            world.add(
                PropEntity(
                    eid,
                    joint=spec.get("joint", "hinge"),
                    axis=spec.get("axis", (0, 1, 0)),
                    anchor=spec.get("anchor", (0, 0, 0)),
                    lo=spec.get("range", (0, 1))[0],
                    hi=spec.get("range", (0, 1))[1],
                    shape_spec=spec["shape"],
                    pos=spec.get("pos", 0.0),
                )
            )
        elif kind == "soft":
            factory = _SOFT_FACTORIES.get(spec.get("factory"))
            if factory is None:
                raise ParseError(f"unknown soft factory {spec.get('factory')!r}")
            body = factory(**spec.get("params", {}))
            if "rotate_rpy" in spec:
                r, p, yw = _vec(spec["rotate_rpy"])
                rotq = quat_from_rpy(r, p, yw)
                centroid = body.x.mean(axis=0)
                body.x = centroid + np.array([quat_rotate(rotq, v) for v in body.x - centroid])
            if "translate" in spec:
                body.x += _vec(spec["translate"])
            pinned = spec.get("pin", [])
            if pinned:
                body.inv_mass[np.asarray(pinned, dtype=int)] = 0.0
            world.add(SoftEntity(eid, body, pinned=pinned,
                                 substeps=spec.get("substeps", 4),
                                 iterations=spec.get("iterations", 20)))
        else:
            raise ParseError(f"unknown entity kind {kind!r}")
    return world


def _rpy_quat(spec):
    if "rpy" in spec:
        r, p, y = _vec(spec["rpy"])
        return quat_from_rpy(r, p, y)
    if "rot" in spec:
        return quat_normalize(np.asarray(spec["rot"], dtype=float))
    return None


def step_world(world, commands=None):
    """Advance one tick; returns the sensor snapshot."""
    return world.step(commands)


def read_sensors(world):
    return world.read_sensors()
