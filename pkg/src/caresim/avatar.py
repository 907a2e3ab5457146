"""Clinically parameterized avatars.

A ClinicalProfile bundles anthropometry, manual muscle test grades,
separate active and passive range-of-motion tables, and vital signs.
Profiles load from JSON; the bundled six live under assets/profiles.

An Avatar built from a profile runs in one of two command modes:

  passive: the body is posed kinematically (a caregiver moving a limb);
      poses are clamped to the passive range of motion.
  active: the avatar drives its own body. Joint targets feed a PD loop
      with inverse-dynamics feedforward and the trunk/limb skeleton
      integrates as a 63-dof articulated body whose joint limits are
      the active range.

Orthogonally, the actuation tier picks how much machinery each step
runs:

  musculoskeletal: Hill-type muscles evaluated every step; activations
      add tensions whose joint torques enter the body dynamics.
  skeletal: no muscle elements; the articulated body alone. Soft-tissue
      meshes attach on top of either tier through the world.

Strength scales linearly with the manual muscle test grade: a muscle in
a group graded g produces g/5 of its reference maximum, passive elastic
force included, so a grade of zero silences the muscle entirely.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ArticulatedBody, DynState, Link, NonFiniteState, bias_torques, mass_matrix
from .mathcore import Transform, solve_spd
from .muscle import Muscle, MuscleBatch, MuscleWaypoint, muscle_torques
from .skeleton import BODY_JOINTS, POSE_SIZE, build_skeleton, clamp_pose, forward_kinematics
from .urdf import read_axis_limits


class UnknownMuscleGroup(Exception):
    """Activation addressed to a muscle group the avatar does not have."""


class ModeMismatch(Exception):
    """Operation not valid in the avatar's current actuation mode."""


class OutOfPlausibleRange(Exception):
    """Physiology value outside the physiologically plausible window."""


class UnknownField(Exception):
    """Physiology field this model does not track."""


PHYSIOLOGY_RANGES = {
    "body_temperature": (30.0, 45.0),  # degrees C
    "heart_rate": (20.0, 250.0),  # beats per minute
}

GRAVITY = np.array([0.0, -9.81, 0.0])


def assets_path():
    return os.path.join(os.path.dirname(__file__), "assets")


def validate_physiology(fields):
    for key, value in fields.items():
        if key not in PHYSIOLOGY_RANGES:
            raise UnknownField(f"unknown physiology field {key!r}")
        lo, hi = PHYSIOLOGY_RANGES[key]
        if not (lo <= float(value) <= hi):
            raise OutOfPlausibleRange(f"{key}={value} outside [{lo}, {hi}]")


@dataclass
class ClinicalProfile:
    id: str
    name: str
    condition: str
    weight_kg: float
    body_dimensions: dict
    mmt: dict  # muscle group -> grade in [0, 5]
    physiology: dict
    arom: dict  # joint -> (3, 2) radians
    prom: dict
    muscle_specs: list = field(default_factory=list)  # raw dicts with f_max_ref


def _resolve(ref, profile_path):
    base = os.path.dirname(os.path.abspath(profile_path))
    for root in (base, os.path.dirname(base)):
        cand = os.path.join(root, ref)
        if os.path.exists(cand):
            return cand
    raise FileNotFoundError(f"cannot resolve {ref!r} relative to {profile_path}")


def load_profile(path):
    """Load a clinical profile from JSON.

    File references inside the profile resolve relative to the profile's
    directory, then one level up (the bundled layout keeps limits and
    muscles in sibling directories).
    """
    with open(path) as fh:
        data = json.load(fh)
    for key in ("id", "weight_kg", "body_dimensions", "mmt", "physiology", "limits", "muscles"):
        if key not in data:
            raise ValueError(f"profile {path}: missing {key!r}")
    for group, grade in data["mmt"].items():
        if not (0 <= float(grade) <= 5):
            raise ValueError(f"profile {path}: MMT grade {grade} for {group} outside 0..5")
    validate_physiology(data["physiology"])
    arom = read_axis_limits(_resolve(data["limits"]["arom"], path))
    prom = read_axis_limits(_resolve(data["limits"]["prom"], path))
    with open(_resolve(data["muscles"], path)) as fh:
        specs = json.load(fh)["muscles"]
    return ClinicalProfile(
        id=data["id"],
        name=data.get("name", data["id"]),
        condition=data.get("condition", ""),
        weight_kg=float(data["weight_kg"]),
        body_dimensions={k: float(v) for k, v in data["body_dimensions"].items()},
        mmt={k: float(v) for k, v in data["mmt"].items()},
        physiology=dict(data["physiology"]),
        arom=arom,
        prom=prom,
        muscle_specs=specs,
    )


def builtin_profiles():
    root = os.path.join(assets_path(), "profiles")
    return sorted(f[:-5] for f in os.listdir(root) if f.endswith(".json"))


def load_builtin(profile_id):
    return load_profile(os.path.join(assets_path(), "profiles", f"{profile_id}.json"))


_fractions_cache = None


def load_mass_fractions():
    global _fractions_cache
    if _fractions_cache is None:
        with open(os.path.join(assets_path(), "mass_fractions.json")) as fh:
            _fractions_cache = json.load(fh)
    return dict(_fractions_cache)


def distribute_masses(weight_kg, fractions):
    """Split total body weight across segments: mass = weight * fraction."""
    return {seg: weight_kg * frac for seg, frac in fractions.items()}


def scaled_muscles(profile):
    """Muscle list with f_max = (grade / 5) * f_max_ref per the profile's
    manual muscle test table."""
    out = []
    for spec in profile.muscle_specs:
        group = spec["group"]
        if group not in profile.mmt:
            raise UnknownMuscleGroup(f"profile {profile.id}: no MMT grade for {group!r}")
        f_max = (profile.mmt[group] / 5.0) * spec["f_max_ref"]
        wps = [MuscleWaypoint(w["joint"], np.asarray(w["offset"], dtype=float)) for w in spec["waypoints"]]
        out.append(Muscle(spec["name"], group, wps, f_max, spec["l_opt"], spec["l_slack"]))
    return out


# ---------------------------------------------------------------------------
# articulated body for active mode: pelvis base plus the 21 trunk/limb
# joints as XYZ revolute triples; fingers, jaw, and eyes stay kinematic

# joint -> (mass key, share, com direction axis, length key builder)
_ROD_RADIUS = 0.04


def _rod_inertia(mass, length, axis):
    r = _ROD_RADIUS
    perp = mass * (length * length / 12.0 + r * r / 4.0) + 1e-5
    along = mass * r * r / 2.0 + 1e-5
    out = np.full(3, perp)
    out[axis] = along
    return out


def _segment_table(d, masses):
    ts = d["torso_length"] / 0.48
    sw = d["shoulder_width"] / 2.0
    ual, fl, hl = d["upper_arm_length"], d["forearm_length"], d["hand_length"]
    th, sh = d["thigh_length"], d["shin_length"]
    rows = {}
    for side, sx in (("left", 1.0), ("right", -1.0)):
        rows[f"{side}_hip"] = (masses[f"{side}_thigh"], (0, -th / 2, 0), 1, th)
        rows[f"{side}_knee"] = (masses[f"{side}_shank"], (0, -sh / 2, 0), 1, sh)
        rows[f"{side}_ankle"] = (masses[f"{side}_foot"] * 0.8, (0, -0.02, 0.065), 2, 0.136)
        rows[f"{side}_foot"] = (masses[f"{side}_foot"] * 0.2, (0, 0, 0.03), 2, 0.06)
        rows[f"{side}_collar"] = (masses[f"{side}_collar"], ((sw - 0.06) / 2 * sx, 0.02 * ts, 0), 0, sw - 0.06)
        rows[f"{side}_shoulder"] = (masses[f"{side}_upper_arm"], (ual / 2 * sx, 0, 0), 0, ual)
        rows[f"{side}_elbow"] = (masses[f"{side}_forearm"], (fl / 2 * sx, 0, 0), 0, fl)
        rows[f"{side}_wrist"] = (masses[f"{side}_hand"], (hl / 2 * sx, 0, 0), 0, hl)
    rows["spine1"] = (masses["spine1"], (0, 0.06 * ts, 0), 1, 0.12 * ts)
    rows["spine2"] = (masses["spine2"], (0, 0.06 * ts, 0), 1, 0.12 * ts)
    rows["spine3"] = (masses["spine3"], (0, 0.07 * ts, 0), 1, 0.14 * ts)
    rows["neck"] = (masses["neck"], (0, d["neck_length"] / 2, 0), 1, d["neck_length"])
    rows["head"] = (masses["head"], (0, d["head_height"] / 2, 0), 1, d["head_height"])
    return rows


_AXES = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))


def build_dynamics_body(model, masses, arom, base_transform=None):
    """Articulated body over the 21 trunk/limb joints.

    Each anatomical joint becomes three chained revolute links (XYZ
    order matching the pose layout); the z link carries the segment
    mass. Joint limits are the active range of motion.
    """
    segs = _segment_table(model.dimensions, masses)
    links = [Link(name="pelvis", parent=-1, joint_type="fixed", mass=masses["pelvis"], com=np.array([0.0, 0.02, 0.0]), inertia=_rod_inertia(masses["pelvis"], 0.2, 1))]
    carrier = {"pelvis": 0}
    pose_idx = []
    for name in BODY_JOINTS:
        jid = model.joint_id(name)
        parent_name = model.names[model.parents[jid]]
        parent = carrier[parent_name]
        mass, com, rod_axis, length = segs[name]
        lim = arom[name]
        for k in range(3):
            is_last = k == 2
            links.append(
                Link(
                    name=f"{name}_{'xyz'[k]}",
                    parent=parent,
                    joint_type="revolute",
                    axis=_AXES[k].copy(),
                    origin_pos=model.offsets[jid].copy() if k == 0 else np.zeros(3),
                    mass=mass if is_last else 0.0,
                    com=np.asarray(com, dtype=float) if is_last else np.zeros(3),
                    inertia=_rod_inertia(mass, length, rod_axis) if is_last else np.zeros(3),
                    limits=(float(lim[k, 0]), float(lim[k, 1])),
                )
            )
            parent = len(links) - 1
            pose_idx.append(3 * jid + k)
        carrier[name] = parent
    body = ArticulatedBody(links, base_transform=base_transform)
    return body, np.array(pose_idx, dtype=int)


class Avatar:
    """One simulated care recipient.

    Holds the skeleton, the strength-scaled muscle set, both range of
    motion tables, segment masses, and vital signs. step() advances the
    active-mode dynamics; passive avatars are moved with set_pose.
    """

    def __init__(self, profile, mode="passive", actuation="musculoskeletal",
                 pd_omega=20.0, pd_zeta=1.0, gravity_comp=True):
        if mode not in ("active", "passive"):
            raise ValueError(f"mode must be active or passive, got {mode!r}")
        if actuation not in ("musculoskeletal", "skeletal"):
            raise ValueError(f"actuation must be musculoskeletal or skeletal, got {actuation!r}")
        self.profile = profile
        self.mode = mode
        self.actuation = actuation
        self.model = build_skeleton(dict(profile.body_dimensions))
        self.arom = {k: np.asarray(v, dtype=float) for k, v in profile.arom.items()}
        self.prom = {k: np.asarray(v, dtype=float) for k, v in profile.prom.items()}
        self.masses = distribute_masses(profile.weight_kg, load_mass_fractions())
        self.muscles = scaled_muscles(profile) if actuation == "musculoskeletal" else []
        self.groups = {m.group for m in self.muscles}
        self.batch = MuscleBatch(self.model, self.muscles)
        self.physiology = dict(profile.physiology)

        d = profile.body_dimensions
        pelvis_y = d["foot_height"] + d["shin_length"] + d["thigh_length"] + 0.06 * d["height"] / 1.70
        self.root = Transform(pos=np.array([0.0, pelvis_y, 0.0]))
        self.pose = np.zeros(POSE_SIZE)
        self.targets = np.zeros(POSE_SIZE)
        self.activations = {m.group: 0.0 for m in self.muscles}
        self.last_forces = np.zeros(len(self.muscles))
        self.last_joint_torques = None

        self.body, self._pose_idx = build_dynamics_body(self.model, self.masses, self.arom, base_transform=self.root)
        self.state = self.body.zero_state()
        self.gravity_comp = gravity_comp
        # computed-torque gains: the controller applies M(q) (kp e - kd qd)
        # plus bias feedforward, so every axis shares one natural frequency;
        # per-dof gains against the coupled mass matrix whip low-inertia
        # modes unstable at any reasonable rate
        self.kp = pd_omega * pd_omega
        self.kd = 2.0 * pd_zeta * pd_omega
        self._lo, self._hi = self.body.limit_arrays()
        self._fk_val = None
        self._fk_pose = None
        self._fk_rpos = None
        self._fk_rrot = None

    # -- mode and posing ----------------------------------------------------

    def set_mode(self, mode):
        if mode not in ("active", "passive"):
            raise ValueError(f"mode must be active or passive, got {mode!r}")
        if mode != self.mode:
            self.mode = mode
            self.state.qd[:] = 0.0
            self.batch.reset()

    def set_root(self, transform):
        """Place the avatar's pelvis frame (bed, wheelchair, gait trainer)."""
        self.root = transform.copy()
        self.body.base = self.root

    def set_pose(self, pose):
        """Passive repositioning; the pose is clamped to the passive range."""
        if self.mode != "passive":
            raise ModeMismatch("set_pose drives a passive avatar; this one is active")
        self.pose = clamp_pose(self.model, np.asarray(pose, dtype=float), self.prom)
        self.state.q = self.pose[self._pose_idx].copy()
        self.state.qd[:] = 0.0

    def set_joint_targets(self, targets):
        """Active-mode PD setpoints: {joint_name: 3 Euler angles}, clamped
        to the active range."""
        if self.mode != "active":
            raise ModeMismatch("set_joint_targets needs an active avatar")
        want = self.targets.copy()
        for name, angles in targets.items():
            jid = self.model.joint_id(name)
            want[3 * jid : 3 * jid + 3] = np.asarray(angles, dtype=float)
        self.targets = clamp_pose(self.model, want, self.arom)

    def actuate(self, activations):
        """Set muscle group activations in [0, 1] (active mode only)."""
        if self.actuation != "musculoskeletal":
            raise ModeMismatch("activations need a musculoskeletal avatar")
        if self.mode != "active":
            raise ModeMismatch("actuate needs an active avatar")
        for group, a in activations.items():
            if group not in self.groups:
                raise UnknownMuscleGroup(f"no muscle group {group!r}")
            a = float(a)
            if not (0.0 <= a <= 1.0):
                raise ValueError(f"activation for {group} must lie in [0, 1], got {a}")
            self.activations[group] = a

    # -- stepping -----------------------------------------------------------

    def fk(self):
        """World transforms for every skeleton joint.

        Memoized on (pose, root): the muscle pass and the collider
        rebuild inside one tick see the same configuration, so the
        chain is only rewalked when something moved. Callers treat the
        returned transforms as read-only.
        """
        if (self._fk_val is not None
                and np.array_equal(self._fk_pose, self.pose)
                and np.array_equal(self._fk_rpos, self.root.pos)
                and np.array_equal(self._fk_rrot, self.root.rot)):
            return self._fk_val
        out = forward_kinematics(self.model, self.pose, self.root)
        self._fk_pose = self.pose.copy()
        self._fk_rpos = self.root.pos.copy()
        self._fk_rrot = self.root.rot.copy()
        self._fk_val = out
        return out

    def step(self, dt):
        if self.muscles:
            transforms = self.fk()
            act = np.array([self.activations[m.group] for m in self.muscles])
            if self.mode == "passive":
                self.last_forces = self.batch.forces(transforms, np.zeros_like(act), dt)
                return
            self.last_forces = self.batch.forces(transforms, act, dt)
            tau_pose, jt = muscle_torques(self.model, transforms, self.muscles, self.last_forces, self.pose)
            self.last_joint_torques = jt
            ext = tau_pose[self._pose_idx]
        else:
            if self.mode == "passive":
                return
            ext = np.zeros(self.body.n_dof)
        q, qd = self.state.q, self.state.qd
        # computed torque: applied joint torque is M(q)(kp e - kd qd) plus
        # inverse-dynamics feedforward, so the closed loop reduces to
        # qdd = kp e - kd qd + Minv * (muscle - uncompensated bias)
        qdd = self.kp * (self.targets[self._pose_idx] - q) - self.kd * qd
        if not self.gravity_comp:
            ext = ext - bias_torques(self.body, q, qd, GRAVITY)
        if np.any(ext != 0.0):
            qdd = qdd + solve_spd(mass_matrix(self.body, q), ext)
        qd = qd + dt * qdd
        q = q + dt * qd
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise NonFiniteState("avatar joint state diverged")
        hit = (q < self._lo) | (q > self._hi)
        q = np.clip(q, self._lo, self._hi)
        qd = np.where(hit, 0.0, qd)
        self.state = DynState(q=q, qd=qd)
        self.pose[self._pose_idx] = q
        self.pose = clamp_pose(self.model, self.pose, self.arom)

    # -- physiology ---------------------------------------------------------

    def set_physiology(self, field_name, value):
        validate_physiology({field_name: value})
        self.physiology[field_name] = float(value)

    def get_physiology(self):
        return dict(self.physiology)
