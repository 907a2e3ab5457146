#!/usr/bin/env python3
"""Regenerate the bundled avatar assets.

Writes, under src/caresim/assets/:
    mass_fractions.json          anthropometric segment mass fractions
    muscles/muscles_default.json polyline muscle set with Hill parameters
    limits/<id>_arom.urdf        active range of motion, revolute XYZ triples
    limits/<id>_prom.urdf        passive range of motion
    profiles/<id>.json           clinical profile tying it all together

Everything is derived from the reference tables below, so the output is
deterministic; run after editing a table.
"""

import json
import os

import numpy as np

from caresim.skeleton import (
    BODY_JOINTS,
    FINGERS,
    JOINT_NAMES,
    REF_DIMS,
    build_skeleton,
    forward_kinematics,
)
from caresim.muscle import Muscle, MuscleWaypoint, path_length
from caresim.urdf import write_axis_limits

ASSETS = os.path.join(os.path.dirname(__file__), "..", "src", "caresim", "assets")

# ---------------------------------------------------------------------------
# segment mass fractions (sum to 1.000)

MASS_FRACTIONS = {
    "pelvis": 0.142,
    "spine1": 0.118,
    "spine2": 0.109,
    "spine3": 0.109,
    "left_collar": 0.0095,
    "right_collar": 0.0095,
    "neck": 0.012,
    "head": 0.069,
    "left_upper_arm": 0.028,
    "right_upper_arm": 0.028,
    "left_forearm": 0.016,
    "right_forearm": 0.016,
    "left_hand": 0.006,
    "right_hand": 0.006,
    "left_thigh": 0.100,
    "right_thigh": 0.100,
    "left_shank": 0.0465,
    "right_shank": 0.0465,
    "left_foot": 0.0145,
    "right_foot": 0.0145,
}

# ---------------------------------------------------------------------------
# reference range of motion, degrees, [lo, hi] per XYZ axis; every range
# includes zero so per-avatar shrinking never strands the rest pose

ROM_DEG = {
    "left_hip": [[-120, 20], [-40, 45], [-30, 45]],
    "left_knee": [[-5, 135], [-10, 10], [-5, 5]],
    "left_ankle": [[-50, 20], [-20, 20], [-15, 15]],
    "left_foot": [[-30, 40], [-5, 5], [-5, 5]],
    "spine1": [[-30, 30], [-30, 30], [-25, 25]],
    "spine2": [[-25, 25], [-25, 25], [-20, 20]],
    "spine3": [[-20, 20], [-20, 20], [-15, 15]],
    "neck": [[-50, 60], [-80, 80], [-45, 45]],
    "head": [[-30, 30], [-45, 45], [-30, 30]],
    "left_collar": [[-10, 10], [-15, 15], [-10, 30]],
    "left_shoulder": [[-90, 90], [-90, 90], [-50, 170]],
    "left_elbow": [[-80, 80], [-145, 5], [-5, 5]],
    "left_wrist": [[-30, 30], [-60, 70], [-25, 35]],
    "jaw": [[-5, 25], [-8, 8], [-5, 5]],
}
FINGER_ROM = [[-10, 10], [-15, 15], [-95, 20]]


def mirror(rows):
    """Reflect a left-side ROM across the sagittal plane: rotations about
    the y and z axes flip sign."""
    out = [list(rows[0])]
    for lo, hi in rows[1:]:
        out.append([-hi, -lo])
    return out


def reference_rom():
    table = {}
    for name, rows in ROM_DEG.items():
        table[name] = rows
        if name.startswith("left_"):
            table["right_" + name[5:]] = mirror(rows)
    for side in ("left", "right"):
        for finger in FINGERS:
            for seg in (1, 2, 3):
                rows = FINGER_ROM if side == "left" else mirror(FINGER_ROM)
                table[f"{side}_{finger}{seg}"] = rows
    return table


REGION_OF = {}
for _n in JOINT_NAMES:
    if _n in ("pelvis", "left_eye", "right_eye"):
        continue
    if _n in ("neck", "head"):
        REGION_OF[_n] = "neck"
    elif _n.startswith("spine"):
        REGION_OF[_n] = "trunk"
    elif _n == "jaw":
        REGION_OF[_n] = "face"
    elif any(f in _n for f in ("index", "middle", "ring", "pinky", "thumb")):
        REGION_OF[_n] = _n[:5].rstrip("_") + "_hand"  # left_hand / right_hand
    elif any(part in _n for part in ("collar", "shoulder", "elbow", "wrist")):
        REGION_OF[_n] = _n.split("_")[0] + "_arm"
    else:
        REGION_OF[_n] = _n.split("_")[0] + "_leg"

# ---------------------------------------------------------------------------
# avatars: condition, anthropometry, per-region (active, passive) scale
# factors applied to the reference ROM, and manual muscle test grades

AVATARS = {
    "morgan": {
        "name": "Morgan",
        "condition": "Brainstem Stroke",
        "weight_kg": 68.0,
        "height_m": 1.73,
        "default_scales": (0.45, 0.80),
        "region_scales": {"neck": (0.40, 0.75), "face": (0.50, 0.85)},
        "default_mmt": 2,
        "mmt": {"neck": 1},
    },
    "jose": {
        "name": "Jose",
        "condition": "Spinal Cord Injury (C1-C3)",
        "weight_kg": 70.0,
        "height_m": 1.78,
        "default_scales": (0.02, 0.85),
        "region_scales": {"neck": (0.50, 0.90), "face": (0.85, 0.95), "trunk": (0.05, 0.80)},
        "default_mmt": 0,
        "mmt": {"neck": 2},
    },
    "natalia": {
        "name": "Natalia",
        "condition": "Spinal Cord Injury (C4-C5)",
        "weight_kg": 57.0,
        "height_m": 1.63,
        "default_scales": (0.03, 0.85),
        "region_scales": {
            "neck": (0.85, 0.95), "face": (0.90, 0.95), "trunk": (0.15, 0.80),
            "left_arm": (0.50, 0.88), "right_arm": (0.50, 0.88),
            "left_hand": (0.05, 0.80), "right_hand": (0.05, 0.80),
        },
        "default_mmt": 0,
        "mmt": {"neck": 4, "shoulder": 2, "elbow_flexor": 3, "elbow_extensor": 1},
    },
    "daniel": {
        "name": "Daniel",
        "condition": "Spinal Cord Injury (C6-C7)",
        "weight_kg": 82.0,
        "height_m": 1.80,
        "default_scales": (0.03, 0.85),
        "region_scales": {
            "neck": (0.90, 0.98), "face": (0.92, 0.98), "trunk": (0.30, 0.85),
            "left_arm": (0.80, 0.92), "right_arm": (0.80, 0.92),
            "left_hand": (0.15, 0.80), "right_hand": (0.15, 0.80),
        },
        "default_mmt": 0,
        "mmt": {"neck": 5, "shoulder": 4, "elbow": 4, "wrist": 3, "hand": 1},
    },
    "kim": {
        "name": "Kim",
        "condition": "Cerebral Palsy",
        "weight_kg": 49.0,
        "height_m": 1.55,
        "default_scales": (0.55, 0.70),
        "region_scales": {},
        "default_mmt": 3,
        "mmt": {"hip": 2, "knee": 2},
    },
    "karan": {
        "name": "Karan",
        "condition": "Left-side Hemiplegia",
        "weight_kg": 75.0,
        "height_m": 1.71,
        "default_scales": (0.90, 1.00),
        "region_scales": {
            "left_arm": (0.25, 0.75), "left_hand": (0.20, 0.75),
            "left_leg": (0.30, 0.78),
        },
        "default_mmt": 5,
        "mmt": {"left": 2, "left_hip": 1, "left_knee": 1},
    },
}

PHYSIOLOGY = {
    "morgan": {"body_temperature": 36.9, "heart_rate": 82.0},
    "jose": {"body_temperature": 36.4, "heart_rate": 74.0},
    "natalia": {"body_temperature": 36.7, "heart_rate": 78.0},
    "daniel": {"body_temperature": 36.6, "heart_rate": 70.0},
    "kim": {"body_temperature": 37.0, "heart_rate": 92.0},
    "karan": {"body_temperature": 36.8, "heart_rate": 76.0},
}

# ---------------------------------------------------------------------------
# muscle set: one muscle per strength group; waypoint offsets are meters
# in the anchor joint frame, f_max_ref is the grade-5 maximum

MUSCLE_SPECS = [
    ("neck_flexor", None, [("spine3", (0.0, 0.06, 0.05)), ("head", (0.0, 0.0, 0.04))], 150),
    ("neck_extensor", None, [("spine3", (0.0, 0.06, -0.05)), ("head", (0.0, 0.0, -0.04))], 150),
    ("shoulder_flexor", "arm", [("collar", (0.06, 0.0, 0.03)), ("shoulder", (0.10, 0.0, 0.02))], 500),
    ("shoulder_extensor", "arm", [("collar", (0.06, 0.0, -0.03)), ("shoulder", (0.10, 0.0, -0.02))], 500),
    ("shoulder_abductor", "arm", [("collar", (0.05, 0.03, 0.0)), ("shoulder", (0.10, 0.02, 0.0))], 400),
    ("elbow_flexor", "arm", [("shoulder", (0.14, 0.0, 0.025)), ("elbow", (0.05, 0.0, 0.02))], 400),
    ("elbow_extensor", "arm", [("shoulder", (0.14, 0.0, -0.025)), ("elbow", (0.05, 0.0, -0.02))], 300),
    ("hip_flexor", "leg", [("pelvis", (0.09, -0.02, 0.04)), ("hip", (0.0, -0.15, 0.03))], 900),
    ("hip_extensor", "leg", [("pelvis", (0.09, -0.02, -0.04)), ("hip", (0.0, -0.15, -0.03))], 1100),
    ("hip_abductor", "leg", [("pelvis", (0.12, 0.0, 0.0)), ("hip", (0.03, -0.12, 0.0))], 600),
    ("knee_flexor", "leg", [("hip", (0.0, -0.20, -0.03)), ("knee", (0.0, -0.10, -0.025))], 800),
    ("knee_extensor", "leg", [("hip", (0.0, -0.20, 0.03)), ("knee", (0.0, -0.10, 0.025))], 1200),
]

OPT_RATIO = 0.55  # of the rest path length
SLACK_RATIO = 0.45


def expand_muscles():
    """Resolve side placeholders and compute Hill lengths on the
    reference skeleton."""
    model = build_skeleton(dict(REF_DIMS))
    tf = forward_kinematics(model, np.zeros(3 * len(JOINT_NAMES)))
    out = []
    for name, laterality, points, f_max in MUSCLE_SPECS:
        if laterality is None:
            variants = [("", points)]
        else:
            variants = []
            for side, sign in (("left_", 1.0), ("right_", -1.0)):
                resolved = []
                for anchor, off in points:
                    joint = anchor if anchor == "pelvis" else side + anchor
                    resolved.append((joint, (sign * off[0], off[1], off[2])))
                variants.append((side, resolved))
        for prefix, resolved in variants:
            mname = prefix + name
            wps = [MuscleWaypoint(j, np.array(o)) for j, o in resolved]
            rest = path_length(model, tf, Muscle(mname, mname, wps, f_max, 1.0, 0.0))
            out.append(
                {
                    "name": mname,
                    "group": mname,
                    "f_max_ref": f_max,
                    "l_opt": round(OPT_RATIO * rest, 6),
                    "l_slack": round(SLACK_RATIO * rest, 6),
                    "waypoints": [
                        {"joint": j, "offset": list(o)} for j, o in resolved
                    ],
                }
            )
    return out


def grade_for(spec, group):
    """Most specific matching MMT rule wins; substring match on the
    group name, longest pattern first."""
    best = spec["default_mmt"]
    best_len = 0
    for pattern, grade in spec["mmt"].items():
        if pattern in group and len(pattern) > best_len:
            best = grade
            best_len = len(pattern)
    return best


def scales_for(spec, joint):
    region = REGION_OF[joint]
    return spec["region_scales"].get(region, spec["default_scales"])


def main():
    for sub in ("profiles", "limits", "muscles"):
        os.makedirs(os.path.join(ASSETS, sub), exist_ok=True)

    with open(os.path.join(ASSETS, "mass_fractions.json"), "w") as fh:
        json.dump(MASS_FRACTIONS, fh, indent=2, sort_keys=True)
        fh.write("\n")

    muscles = expand_muscles()
    with open(os.path.join(ASSETS, "muscles", "muscles_default.json"), "w") as fh:
        json.dump({"muscles": muscles}, fh, indent=2)
        fh.write("\n")

    rom = reference_rom()
    model = build_skeleton(dict(REF_DIMS))
    chain = {}
    for name in rom:
        p = model.parents[model.joint_id(name)]
        parent_name = model.names[p] if p >= 0 else None
        # walk up past joints absent from the table (the eyes, the root)
        while parent_name is not None and parent_name not in rom:
            pi = model.joint_id(parent_name)
            pp = model.parents[pi]
            parent_name = model.names[pp] if pp >= 0 else None
        chain[name] = parent_name

    for pid, spec in AVATARS.items():
        arom, prom = {}, {}
        for joint, rows in rom.items():
            s_a, s_p = scales_for(spec, joint)
            ref = np.deg2rad(np.asarray(rows, dtype=float))
            arom[joint] = ref * s_a
            prom[joint] = ref * s_p
        write_axis_limits(
            os.path.join(ASSETS, "limits", f"{pid}_arom.urdf"),
            f"{pid}_arom", arom, chain,
        )
        write_axis_limits(
            os.path.join(ASSETS, "limits", f"{pid}_prom.urdf"),
            f"{pid}_prom", prom, chain,
        )

        hscale = spec["height_m"] / REF_DIMS["height"]
        dims = {k: round(v * hscale, 6) for k, v in REF_DIMS.items()}
        mmt = {m["group"]: grade_for(spec, m["group"]) for m in muscles}
        profile = {
            "id": pid,
            "name": spec["name"],
            "condition": spec["condition"],
            "weight_kg": spec["weight_kg"],
            "body_dimensions": dims,
            "mmt": mmt,
            "physiology": PHYSIOLOGY[pid],
            "limits": {
                "arom": f"limits/{pid}_arom.urdf",
                "prom": f"limits/{pid}_prom.urdf",
            },
            "muscles": "muscles/muscles_default.json",
        }
        with open(os.path.join(ASSETS, "profiles", f"{pid}.json"), "w") as fh:
            json.dump(profile, fh, indent=2)
            fh.write("\n")
    print(f"assets written under {os.path.abspath(ASSETS)}")


if __name__ == "__main__":
    main()
