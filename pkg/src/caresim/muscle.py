"""Three-element Hill muscle with a rigid tendon on a polyline path.

Contractile force is activation * f_max * f_L(L_CE) * f_V(V_CE) with a
gaussian force-length curve and a hyperbolic force-velocity curve
(saturating at 1.4 f_max when lengthening). A parallel elastic element
engages past optimal length. Tendon is rigid: L_CE is the waypoint path
length minus slack length, and V_CE is its backward difference.

A muscle is a list of waypoints, each anchored to a skeleton node with
a local offset. Every straight segment between consecutive waypoints
pulls its endpoints together; this torques every joint on the tree path
between the two anchor nodes except their common ancestor, since a
force on a link can only act about joints between the link and the
anchor side of the tree.
"""

from dataclasses import dataclass, field

import numpy as np

from .mathcore import cross3, quat_rotate
from .skeleton import _axis_columns


class ActivationOutOfRange(Exception):
    pass


class DanglingWaypoint(Exception):
    """A waypoint references a joint name the skeleton does not have."""


# curve constants: gaussian width, max shortening speed in optimal
# lengths per second, f_V curvature, lengthening gain, PEE gain/slope
FL_WIDTH = 0.45
VMAX_PER_LOPT = 10.0
FV_CURVE = 0.25
FV_ECC_GAIN = 0.4
PEE_GAIN = 0.05
PEE_SLOPE = 5.0


@dataclass
class MuscleWaypoint:
    joint: str
    offset: np.ndarray


@dataclass
class Muscle:
    name: str
    group: str
    waypoints: list
    f_max: float
    l_opt: float
    l_slack: float


@dataclass
class MuscleState:
    activation: float = 0.0
    l_ce: float = 0.0
    v_ce: float = 0.0
    force: float = 0.0
    primed: bool = False  # first sample taken, so v_ce is meaningful


def force_length(l_ce, l_opt):
    x = l_ce / l_opt - 1.0
    return np.exp(-(x * x) / FL_WIDTH)


def force_velocity(v_ce, l_opt):
    """Hyperbolic force-velocity scaling; v_ce < 0 is shortening."""
    v_max = VMAX_PER_LOPT * l_opt
    if v_ce < 0.0:
        vhat = min(-v_ce / v_max, 1.0)
        return (1.0 - vhat) / (1.0 + vhat / FV_CURVE)
    u = v_ce / v_max
    return 1.0 + FV_ECC_GAIN * u / (u + FV_CURVE)


def passive_force(l_ce, l_opt, f_max):
    if l_ce <= l_opt:
        return 0.0
    return f_max * PEE_GAIN * (np.exp(PEE_SLOPE * (l_ce / l_opt - 1.0)) - 1.0)


def contractile_force(activation, f_max, l_ce, v_ce, l_opt):
    if not 0.0 <= activation <= 1.0:
        raise ActivationOutOfRange(f"activation {activation} outside [0, 1]")
    return activation * f_max * force_length(l_ce, l_opt) * force_velocity(v_ce, l_opt)


def total_force(activation, f_max, l_ce, v_ce, l_opt):
    return contractile_force(activation, f_max, l_ce, v_ce, l_opt) + passive_force(
        l_ce, l_opt, f_max
    )


def path_points(model, transforms, muscle):
    pts = np.empty((len(muscle.waypoints), 3))
    for k, wp in enumerate(muscle.waypoints):
        i = model.index.get(wp.joint)
        if i is None:
            raise DanglingWaypoint(f"{muscle.name}: no joint named {wp.joint!r}")
        t = transforms[i]
        pts[k] = t.pos + quat_rotate(t.rot, np.asarray(wp.offset, dtype=float))
    return pts


def path_length(model, transforms, muscle):
    pts = path_points(model, transforms, muscle)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def tree_path(model, a, b):
    """Nodes on the a-side and b-side of the tree path a..b, ancestor excluded.

    Returns (a_side, b_side): a_side walks from a up to (not including)
    the common ancestor, b_side likewise from b.
    """
    anc_a = []
    i = a
    while i >= 0:
        anc_a.append(i)
        i = model.parents[i]
    mark = set(anc_a)
    b_side = []
    i = b
    while i not in mark:
        b_side.append(i)
        i = model.parents[i]
    common = i
    a_side = anc_a[: anc_a.index(common)]
    return a_side, b_side


def update_state(model, transforms, muscle, state, activation, dt):
    """Advance one muscle: rigid-tendon length, backward-difference velocity."""
    l_ce = path_length(model, transforms, muscle) - muscle.l_slack
    if state.primed and dt > 0.0:
        v_ce = (l_ce - state.l_ce) / dt
    else:
        v_ce = 0.0
    state.activation = activation
    state.l_ce = l_ce
    state.v_ce = v_ce
    state.force = total_force(activation, muscle.f_max, l_ce, v_ce, muscle.l_opt)
    state.primed = True
    return state


def muscle_torques(model, transforms, muscles, forces, pose=None):
    """Generalized torques from muscle tensions.

    forces: per-muscle scalar tensions aligned with muscles. Returns
    (tau, joint_torques): tau is a flat vector matching the pose layout
    with one entry per Euler axis; joint_torques is an (N, 3) array of
    world torque vectors per node, useful for sensors. pose orients the
    per-joint Euler axes (zero pose assumed when omitted).
    """
    n = len(model.names)
    pose = np.zeros(3 * n) if pose is None else np.asarray(pose, dtype=float)
    joint_torques = np.zeros((n, 3))
    for muscle, f in zip(muscles, forces):
        if f == 0.0:
            continue
        pts = path_points(model, transforms, muscle)
        anchors = [model.index[wp.joint] for wp in muscle.waypoints]
        for seg in range(len(pts) - 1):
            a, b = anchors[seg], anchors[seg + 1]
            if a == b:
                continue
            p1, p2 = pts[seg], pts[seg + 1]
            s = p2 - p1
            norm = np.linalg.norm(s)
            if norm < 1e-12:
                continue
            s = s / norm
            a_side, b_side = tree_path(model, a, b)
            for k in a_side:  # p1 is distal to these joints; pull toward p2
                joint_torques[k] += cross3(p1 - transforms[k].pos, f * s)
            for k in b_side:
                joint_torques[k] += cross3(p2 - transforms[k].pos, -f * s)

    tau = np.zeros(3 * n)
    for k in range(n):
        tv = joint_torques[k]
        if not np.any(tv):
            continue
        parent = model.parents[k]
        parent_rot = transforms[parent].rot if parent >= 0 else np.array([1.0, 0, 0, 0])
        # project the world torque on the joint's three Euler axes
        axes = _axis_columns(parent_rot, pose[3 * k : 3 * k + 3])
        tau[3 * k : 3 * k + 3] = [a @ tv for a in axes]
    return tau, joint_torques


class MuscleBatch:
    """Vectorized evaluation of many muscles against one skeleton.

    Precomputes flat waypoint arrays so per-frame work is a handful of
    numpy operations; used by the throughput benchmark and the avatar
    stepper.
    """

    def __init__(self, model, muscles):
        self.model = model
        self.muscles = muscles
        jids, offs, starts = [], [], [0]
        for m in muscles:
            for wp in m.waypoints:
                i = model.index.get(wp.joint)
                if i is None:
                    raise DanglingWaypoint(f"{m.name}: no joint named {wp.joint!r}")
                jids.append(i)
                offs.append(np.asarray(wp.offset, dtype=float))
            starts.append(starts[-1] + len(m.waypoints))
        self.wp_joint = np.array(jids, dtype=int)
        self.wp_offset = np.array(offs)
        self.starts = np.array(starts, dtype=int)
        self.f_max = np.array([m.f_max for m in muscles])
        self.l_opt = np.array([m.l_opt for m in muscles])
        self.l_slack = np.array([m.l_slack for m in muscles])
        # segment index: every waypoint except each muscle's last starts one
        seg_mask = np.ones(len(jids), dtype=bool)
        seg_mask[self.starts[1:] - 1] = False
        self.seg_from = np.nonzero(seg_mask)[0]
        self.seg_muscle = np.repeat(np.arange(len(muscles)), [len(m.waypoints) - 1 for m in muscles])
        self.prev_l = None

    def world_points(self, transforms):
        rot = np.array([transforms[i].rot for i in self.wp_joint])
        pos = np.array([transforms[i].pos for i in self.wp_joint])
        w = rot[:, :1]
        u = rot[:, 1:4]
        t = 2.0 * np.cross(u, self.wp_offset)
        return pos + self.wp_offset + w * t + np.cross(u, t)

    def lengths(self, transforms):
        pts = self.world_points(transforms)
        seg = np.linalg.norm(pts[self.seg_from + 1] - pts[self.seg_from], axis=1)
        out = np.zeros(len(self.muscles))
        np.add.at(out, self.seg_muscle, seg)
        return out

    def forces(self, transforms, activations, dt):
        """Tension per muscle. activations: (M,) in [0, 1]."""
        act = np.asarray(activations, dtype=float)
        if np.any(act < 0.0) or np.any(act > 1.0):
            raise ActivationOutOfRange("activations must lie in [0, 1]")
        l_ce = self.lengths(transforms) - self.l_slack
        if self.prev_l is None or dt <= 0.0:
            v_ce = np.zeros_like(l_ce)
        else:
            v_ce = (l_ce - self.prev_l) / dt
        self.prev_l = l_ce

        x = l_ce / self.l_opt - 1.0
        f_l = np.exp(-(x * x) / FL_WIDTH)
        v_max = VMAX_PER_LOPT * self.l_opt
        f_v = np.empty_like(v_ce)
        short = v_ce < 0.0
        vhat = np.minimum(-v_ce[short] / v_max[short], 1.0)
        f_v[short] = (1.0 - vhat) / (1.0 + vhat / FV_CURVE)
        u = v_ce[~short] / v_max[~short]
        f_v[~short] = 1.0 + FV_ECC_GAIN * u / (u + FV_CURVE)

        pee = np.where(
            l_ce > self.l_opt,
            self.f_max * PEE_GAIN * (np.exp(PEE_SLOPE * x) - 1.0),
            0.0,
        )
        return act * self.f_max * f_l * f_v + pee

    def reset(self):
        self.prev_l = None
