"""Parametric human skeleton: layout, forward kinematics, skinning, IK.

The skeleton has 55 nodes: a pelvis root plus 54 articulated joints
(21 body, 3 face, 30 hand). Each node carries a 3-DoF rotation expressed
as intrinsic XYZ Euler angles, so a full pose is a flat vector of
length 165; entry 0..2 is the global root orientation. Root translation
lives in a separate rigid transform, never in the pose vector.

Bone lengths come from a dictionary of named body dimensions (meters).
A 10-vector of shape coefficients scales dimension groups and a
10-vector of expression coefficients offsets the rest pose of the face
joints. Coordinates are Y-up with the character facing +Z; +X is the
character's left.
"""

from dataclasses import dataclass, field

import numpy as np

from .mathcore import (
    Transform,
    quat_from_intrinsic_xyz,
    quat_mul,
    quat_rotate,
    transform_identity,
)


class MissingDimension(Exception):
    """A required body dimension is absent from the profile."""


class MalformedROM(Exception):
    """A joint limit table row is not a well-formed [lo, hi] pair set."""


# reference dimensions for a 1.70 m adult; scaling is per dimension group
REF_DIMS = {
    "height": 1.70,
    "shoulder_width": 0.36,
    "upper_arm_length": 0.28,
    "forearm_length": 0.25,
    "hand_length": 0.18,
    "thigh_length": 0.42,
    "shin_length": 0.41,
    "foot_height": 0.07,
    "torso_length": 0.48,
    "neck_length": 0.10,
    "head_height": 0.16,
    "hip_width": 0.18,
}

BODY_JOINTS = [
    "left_hip", "right_hip", "spine1",
    "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3",
    "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
]

FACE_JOINTS = ["jaw", "left_eye", "right_eye"]

FINGERS = ["index", "middle", "pinky", "ring", "thumb"]

HAND_JOINTS = [
    f"{side}_{finger}{seg}"
    for side in ("left", "right")
    for finger in FINGERS
    for seg in (1, 2, 3)
]

JOINT_NAMES = ["pelvis"] + BODY_JOINTS + FACE_JOINTS + HAND_JOINTS

N_JOINTS = len(JOINT_NAMES)  # 55 nodes, 54 articulated + root
POSE_SIZE = 3 * N_JOINTS

# joints whose rotation is pinned to zero when a limit table omits them
FROZEN_WITHOUT_LIMITS = ("left_eye", "right_eye")

_FINGER_BASES = {
    "index": np.array([0.090, 0.0, 0.025]),
    "middle": np.array([0.095, 0.0, 0.008]),
    "ring": np.array([0.090, 0.0, -0.008]),
    "pinky": np.array([0.080, 0.0, -0.025]),
    "thumb": np.array([0.030, -0.010, 0.035]),
}
_FINGER_SEGMENTS = {2: 0.035, 3: 0.030}


def _offsets(d):
    """Node name -> (parent name, local offset) for one set of dimensions."""
    hw = d["hip_width"] / 2.0
    sw = d["shoulder_width"] / 2.0
    drop = 0.06 * d["height"] / REF_DIMS["height"]
    ts = d["torso_length"] / REF_DIMS["torso_length"]
    hs = d["head_height"] / REF_DIMS["head_height"]
    gs = d["hand_length"] / REF_DIMS["hand_length"]

    table = {
        "pelvis": (None, np.zeros(3)),
        "left_hip": ("pelvis", np.array([hw, -drop, 0.0])),
        "right_hip": ("pelvis", np.array([-hw, -drop, 0.0])),
        "spine1": ("pelvis", np.array([0.0, 0.10 * ts, 0.0])),
        "left_knee": ("left_hip", np.array([0.0, -d["thigh_length"], 0.0])),
        "right_knee": ("right_hip", np.array([0.0, -d["thigh_length"], 0.0])),
        "spine2": ("spine1", np.array([0.0, 0.12 * ts, 0.0])),
        "left_ankle": ("left_knee", np.array([0.0, -d["shin_length"], 0.0])),
        "right_ankle": ("right_knee", np.array([0.0, -d["shin_length"], 0.0])),
        "spine3": ("spine2", np.array([0.0, 0.12 * ts, 0.0])),
        "left_foot": ("left_ankle", np.array([0.0, -0.04, 0.13])),
        "right_foot": ("right_ankle", np.array([0.0, -0.04, 0.13])),
        "neck": ("spine3", np.array([0.0, 0.14 * ts, 0.0])),
        "left_collar": ("spine3", np.array([0.06, 0.10 * ts, 0.0])),
        "right_collar": ("spine3", np.array([-0.06, 0.10 * ts, 0.0])),
        "head": ("neck", np.array([0.0, d["neck_length"], 0.0])),
        "left_shoulder": ("left_collar", np.array([sw - 0.06, 0.04 * ts, 0.0])),
        "right_shoulder": ("right_collar", np.array([-(sw - 0.06), 0.04 * ts, 0.0])),
        "left_elbow": ("left_shoulder", np.array([d["upper_arm_length"], 0.0, 0.0])),
        "right_elbow": ("right_shoulder", np.array([-d["upper_arm_length"], 0.0, 0.0])),
        "left_wrist": ("left_elbow", np.array([d["forearm_length"], 0.0, 0.0])),
        "right_wrist": ("right_elbow", np.array([-d["forearm_length"], 0.0, 0.0])),
        "jaw": ("head", hs * np.array([0.0, 0.01, 0.055])),
        "left_eye": ("head", hs * np.array([0.03, 0.08, 0.08])),
        "right_eye": ("head", hs * np.array([-0.03, 0.08, 0.08])),
    }
    for side, sign in (("left", 1.0), ("right", -1.0)):
        wrist = f"{side}_wrist"
        for finger in FINGERS:
            base = _FINGER_BASES[finger] * gs
            table[f"{side}_{finger}1"] = (
                wrist,
                np.array([sign * base[0], base[1], base[2]]),
            )
            for seg in (2, 3):
                table[f"{side}_{finger}{seg}"] = (
                    f"{side}_{finger}{seg - 1}",
                    np.array([sign * _FINGER_SEGMENTS[seg] * gs, 0.0, 0.0]),
                )
    return table


@dataclass
class SkeletonModel:
    names: list
    parents: np.ndarray  # (N,) int, -1 for root
    offsets: np.ndarray  # (N, 3) local translation from parent
    rest_pose: np.ndarray  # (POSE_SIZE,) expression-driven rest angles
    dimensions: dict
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {n: i for i, n in enumerate(self.names)}

    def joint_id(self, name):
        return self.index[name]


# shape coefficients scale dimension groups; row i lists the dimensions
# touched by coefficient i, all at 5% per unit
_SHAPE_GROUPS = [
    list(REF_DIMS),  # overall size
    ["torso_length"],
    ["upper_arm_length", "forearm_length"],
    ["shoulder_width"],
    ["hip_width"],
    ["head_height"],
    ["hand_length"],
    ["foot_height"],
    ["neck_length"],
    [],  # girth only; consumed by the skin builder
]


def apply_shape(dimensions, shape):
    shape = np.zeros(10) if shape is None else np.asarray(shape, dtype=float)
    if shape.shape != (10,):
        raise ValueError(f"shape vector must have 10 entries, got {shape.shape}")
    dims = dict(dimensions)
    for coeff, group in zip(shape, _SHAPE_GROUPS):
        for key in group:
            dims[key] = dims[key] * (1.0 + 0.05 * coeff)
    return dims


def build_skeleton(body_dimensions, shape=None, expression=None):
    """Construct a skeleton from named dimensions.

    shape: 10 coefficients scaling dimension groups (None = neutral)
    expression: 10 coefficients; the first three offset the jaw rest
    rotation (open, lateral, protrude), the next two the eyes (None = neutral)
    """
    for key in REF_DIMS:
        if key not in body_dimensions:
            raise MissingDimension(key)
    dims = apply_shape(body_dimensions, shape)
    table = _offsets(dims)
    parents = np.empty(N_JOINTS, dtype=int)
    offsets = np.zeros((N_JOINTS, 3))
    index = {n: i for i, n in enumerate(JOINT_NAMES)}
    for i, name in enumerate(JOINT_NAMES):
        parent, off = table[name]
        parents[i] = -1 if parent is None else index[parent]
        offsets[i] = off

    rest = np.zeros(POSE_SIZE)
    if expression is not None:
        expr = np.asarray(expression, dtype=float)
        if expr.shape != (10,):
            raise ValueError(f"expression vector must have 10 entries, got {expr.shape}")
        jaw = index["jaw"]
        rest[3 * jaw : 3 * jaw + 3] = 0.15 * expr[:3]
        for eye, k in ((index["left_eye"], 3), (index["right_eye"], 4)):
            rest[3 * eye] = 0.1 * expr[k]
    return SkeletonModel(
        names=list(JOINT_NAMES),
        parents=parents,
        offsets=offsets,
        rest_pose=rest,
        dimensions=dims,
    )


def forward_kinematics(model, pose, root_transform=None):
    """World transform of every node. pose: (165,); returns list of Transform."""
    pose = np.asarray(pose, dtype=float)
    if pose.shape != (POSE_SIZE,):
        raise ValueError(f"pose must have {POSE_SIZE} entries, got {pose.shape}")
    base = transform_identity() if root_transform is None else root_transform
    out = [None] * N_JOINTS
    for i in range(N_JOINTS):
        local_q = quat_from_intrinsic_xyz(pose[3 * i : 3 * i + 3])
        p = model.parents[i]
        if p < 0:
            rot = quat_mul(base.rot, local_q)
            pos = base.pos.copy()
        else:
            parent = out[p]
            rot = quat_mul(parent.rot, local_q)
            pos = parent.pos + quat_rotate(parent.rot, model.offsets[i])
        out[i] = Transform(rot=rot, pos=pos)
    return out


def joint_positions(model, pose, root_transform=None):
    return np.array([t.pos for t in forward_kinematics(model, pose, root_transform)])


def check_limit_table(limits):
    for name, arr in limits.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (3, 2):
            raise MalformedROM(f"{name}: limit rows must be (3, 2), got {arr.shape}")
        if np.any(arr[:, 0] > arr[:, 1]):
            raise MalformedROM(f"{name}: lower bound exceeds upper bound")
        if not np.all(np.isfinite(arr)):
            raise MalformedROM(f"{name}: non-finite limit")


def clamp_pose(model, pose, limits):
    """Clamp per-axis Euler angles into a limit table. Root is never clamped.

    Joints missing from the table keep their angles, except the eye
    joints which are pinned to zero. Idempotent by construction.
    """
    out = np.asarray(pose, dtype=float).copy()
    for name, arr in limits.items():
        i = model.index.get(name)
        if i is None or i == 0:
            continue
        arr = np.asarray(arr)
        out[3 * i : 3 * i + 3] = np.clip(out[3 * i : 3 * i + 3], arr[:, 0], arr[:, 1])
    for name in FROZEN_WITHOUT_LIMITS:
        if name not in limits:
            i = model.index[name]
            out[3 * i : 3 * i + 3] = 0.0
    return out


# ---------------------------------------------------------------------------
# skinning

# bone name -> (child joint defining the segment end, ring radius)
_SKIN_BONES = {
    "pelvis": ("spine1", 0.12),
    "spine1": ("spine2", 0.12),
    "spine2": ("spine3", 0.11),
    "spine3": ("neck", 0.10),
    "neck": ("head", 0.05),
    "head": (None, 0.09),
    "left_hip": ("left_knee", 0.07),
    "right_hip": ("right_knee", 0.07),
    "left_knee": ("left_ankle", 0.05),
    "right_knee": ("right_ankle", 0.05),
    "left_ankle": ("left_foot", 0.03),
    "right_ankle": ("right_foot", 0.03),
    "left_shoulder": ("left_elbow", 0.045),
    "right_shoulder": ("right_elbow", 0.045),
    "left_elbow": ("left_wrist", 0.035),
    "right_elbow": ("right_wrist", 0.035),
    "left_wrist": ("left_middle1", 0.02),
    "right_wrist": ("right_middle1", 0.02),
}


@dataclass
class Skin:
    vertices: np.ndarray  # (V, 3) rest positions, world frame at zero pose
    bone_ids: np.ndarray  # (V, 2) int node indices
    weights: np.ndarray  # (V, 2) blend weights, rows sum to 1
    bind_inv: list  # per-node inverse of the rest world transform


def build_skin(model, rings=5, ring_verts=8, girth=0.0):
    """Procedural capsule-ring skin around each major bone.

    girth: extra radial scale, 5% per unit (shape coefficient 9).
    Vertices within 25% of a segment end blend toward the neighboring bone.
    """
    rest = forward_kinematics(model, np.zeros(POSE_SIZE))
    scale = 1.0 + 0.05 * girth
    verts, bids, wts = [], [], []
    for bone, (child, radius) in _SKIN_BONES.items():
        bi = model.index[bone]
        a = rest[bi].pos
        if child is None:
            b = a + np.array([0.0, model.dimensions["head_height"], 0.0])
            other = bi
        else:
            ci = model.index[child]
            b = rest[ci].pos
            other = ci if _SKIN_BONES.get(child) else bi
        axis = b - a
        length = np.linalg.norm(axis)
        if length < 1e-9:
            continue
        axis = axis / length
        ref = np.array([1.0, 0.0, 0.0])
        if abs(axis @ ref) > 0.9:
            ref = np.array([0.0, 0.0, 1.0])
        u = np.cross(axis, ref)
        u /= np.linalg.norm(u)
        w = np.cross(axis, u)
        r = radius * scale
        for i in range(rings):
            t = (i + 0.5) / rings
            center = a + t * length * axis
            blend = 0.0
            if t > 0.75 and other != bi:
                blend = (t - 0.75) / 0.25 * 0.5
            for k in range(ring_verts):
                ang = 2.0 * np.pi * k / ring_verts
                verts.append(center + r * (np.cos(ang) * u + np.sin(ang) * w))
                bids.append((bi, other))
                wts.append((1.0 - blend, blend))
    bind_inv = [t.inverse() for t in rest]
    return Skin(
        vertices=np.array(verts),
        bone_ids=np.array(bids, dtype=int),
        weights=np.array(wts),
        bind_inv=bind_inv,
    )


def skin_vertices(skin, transforms):
    """Linear blend skinning of the rest vertices through node transforms."""
    out = np.zeros_like(skin.vertices)
    for col in range(skin.weights.shape[1]):
        ids = skin.bone_ids[:, col]
        wcol = skin.weights[:, col]
        for bi in np.unique(ids):
            mask = ids == bi
            if not np.any(wcol[mask]):
                continue
            delta = transforms[bi].compose(skin.bind_inv[bi])
            moved = quat_rotate(delta.rot, skin.vertices[mask]) + delta.pos
            out[mask] += wcol[mask, None] * moved
    return out


# ---------------------------------------------------------------------------
# inverse kinematics

def _chain_to(model, end_id):
    chain = []
    i = end_id
    while i >= 0:
        chain.append(i)
        i = model.parents[i]
    return chain[::-1]


def _axis_columns(world_rot, angles):
    """World directions of the three intrinsic-XYZ rotation axes of a node.

    world_rot is the node's parent world rotation composed with nothing:
    the x axis rotates in the parent frame, y after the x rotation,
    z after x and y.
    """
    ax, ay, az = angles
    qx = quat_from_intrinsic_xyz(np.array([ax, 0.0, 0.0]))
    qxy = quat_from_intrinsic_xyz(np.array([ax, ay, 0.0]))
    return (
        quat_rotate(world_rot, np.array([1.0, 0.0, 0.0])),
        quat_rotate(quat_mul(world_rot, qx), np.array([0.0, 1.0, 0.0])),
        quat_rotate(quat_mul(world_rot, qxy), np.array([0.0, 0.0, 1.0])),
    )


def solve_ik(
    model,
    pose,
    end_joint,
    target,
    root_transform=None,
    limits=None,
    free_joints=None,
    tip_offset=None,
    damping=0.05,
    max_step=0.2,
    max_iters=100,
    tol=1e-4,
):
    """Damped least squares IK driving one joint (plus optional local tip
    offset) to a world position.

    free_joints: names allowed to move (default: every chain joint except
    the root). Steps that do not reduce the residual are halved up to
    eight times, so the accepted residual is monotone. Returns
    (pose, info) where info has converged/iterations/residual.
    """
    pose = np.asarray(pose, dtype=float).copy()
    target = np.asarray(target, dtype=float)
    end_id = model.joint_id(end_joint)
    chain = _chain_to(model, end_id)
    movable = [i for i in chain[1:]]
    if free_joints is not None:
        allowed = {model.joint_id(n) for n in free_joints}
        movable = [i for i in movable if i in allowed]
    if limits is not None:
        check_limit_table(limits)

    def end_pos(p):
        t = forward_kinematics(model, p, root_transform)[end_id]
        if tip_offset is not None:
            return t.pos + quat_rotate(t.rot, np.asarray(tip_offset))
        return t.pos

    def clamped(p):
        return clamp_pose(model, p, limits) if limits is not None else p

    pose = clamped(pose)
    residual = np.linalg.norm(end_pos(pose) - target)
    lam = damping
    iters = 0
    for iters in range(1, max_iters + 1):
        if residual <= tol:
            break
        tf = forward_kinematics(model, pose, root_transform)
        p_end = end_pos(pose)
        cols = []
        for i in movable:
            parent = model.parents[i]
            parent_rot = tf[parent].rot if parent >= 0 else (
                root_transform.rot if root_transform else np.array([1.0, 0, 0, 0])
            )
            axes = _axis_columns(parent_rot, pose[3 * i : 3 * i + 3])
            arm = p_end - tf[i].pos
            cols.extend(np.cross(a, arm) for a in axes)
        jac = np.array(cols).T  # (3, 3*len(movable))
        err = target - p_end

        # raise the damping until the step reduces the residual; high
        # damping bends toward (short) steepest descent, so this fails
        # only at a stationary point
        improved = False
        for _ in range(10):
            jjt = jac @ jac.T + (lam ** 2) * np.eye(3)
            dq = jac.T @ np.linalg.solve(jjt, err)
            peak = np.max(np.abs(dq))
            if peak > max_step:
                dq = dq * (max_step / peak)
            cand = pose.copy()
            for k, i in enumerate(movable):
                cand[3 * i : 3 * i + 3] += dq[3 * k : 3 * k + 3]
            cand = clamped(cand)
            cand_res = np.linalg.norm(end_pos(cand) - target)
            if cand_res < residual:
                pose, residual = cand, cand_res
                lam = max(lam / 2.0, damping)
                improved = True
                break
            lam *= 4.0
        if not improved:
            break
    return pose, {
        "converged": bool(residual <= tol),
        "iterations": iters,
        "residual": float(residual),
    }
