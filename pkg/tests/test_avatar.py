"""Avatar tests: profiles, strength scaling, masses, physiology, modes.

Oracles: the mass distribution worked example is checked against hand
multiplication; MMT scaling is exact linearity; range containment is
checked joint by joint against the loaded limit tables.
"""

import json
import os

import numpy as np
import pytest

from caresim.avatar import (
    Avatar,
    ModeMismatch,
    OutOfPlausibleRange,
    UnknownField,
    UnknownMuscleGroup,
    builtin_profiles,
    distribute_masses,
    load_builtin,
    load_mass_fractions,
    load_profile,
    scaled_muscles,
)
from caresim.skeleton import BODY_JOINTS

ALL_IDS = ["daniel", "jose", "karan", "kim", "morgan", "natalia"]


class TestProfiles:
    def test_builtin_roster(self):
        assert builtin_profiles() == ALL_IDS

    def test_fields(self):
        for pid in ALL_IDS:
            p = load_builtin(pid)
            assert p.id == pid
            assert p.weight_kg > 20
            assert len(p.arom) == 52 and len(p.prom) == 52
            assert len(p.muscle_specs) == 22
            assert set(p.mmt) == {m["group"] for m in p.muscle_specs}

    def test_arom_within_prom_everywhere(self):
        for pid in ALL_IDS:
            p = load_builtin(pid)
            for joint, a in p.arom.items():
                pr = p.prom[joint]
                assert np.all(a[:, 0] >= pr[:, 0] - 1e-12), (pid, joint)
                assert np.all(a[:, 1] <= pr[:, 1] + 1e-12), (pid, joint)

    def test_high_cervical_injury_freezes_limbs_not_neck(self):
        p = load_builtin("jose")
        elbow = p.arom["left_elbow"]
        assert np.all(elbow[:, 1] - elbow[:, 0] < 0.06)
        neck = p.arom["neck"]
        assert neck[1, 1] - neck[1, 0] > 1.0
        # passive range stays near normal: a caregiver can still move the arm
        assert p.prom["left_elbow"][1, 0] < -1.8

    def test_hemiplegia_is_one_sided(self):
        p = load_builtin("karan")
        left = p.arom["left_shoulder"]
        right = p.arom["right_shoulder"]
        width = lambda r: r[:, 1] - r[:, 0]
        assert np.all(width(left) < 0.5 * width(right))

    def test_missing_key_rejected(self, tmp_path):
        f = tmp_path / "p.json"
        f.write_text(json.dumps({"id": "x", "weight_kg": 60}))
        with pytest.raises(ValueError, match="missing"):
            load_profile(str(f))

    def test_bad_mmt_grade_rejected(self, tmp_path):
        src = json.load(open(os.path.join(os.path.dirname(__file__), "..", "src", "caresim", "assets", "profiles", "kim.json")))
        src["mmt"]["neck_flexor"] = 7
        f = tmp_path / "kim.json"
        f.write_text(json.dumps(src))
        with pytest.raises(ValueError, match="outside 0..5"):
            load_profile(str(f))

    def test_implausible_vitals_rejected_at_load(self, tmp_path):
        src = json.load(open(os.path.join(os.path.dirname(__file__), "..", "src", "caresim", "assets", "profiles", "kim.json")))
        src["physiology"]["body_temperature"] = 50.0
        f = tmp_path / "kim.json"
        f.write_text(json.dumps(src))
        with pytest.raises(OutOfPlausibleRange):
            load_profile(str(f))


class TestMasses:
    def test_worked_example(self):
        # 80 kg with the coarse four-group split
        out = distribute_masses(
            80.0,
            {"head": 0.081, "trunk": 0.497, "left_arm": 0.050, "left_leg": 0.161},
        )
        assert out["head"] == pytest.approx(6.48, abs=1e-12)
        assert out["trunk"] == pytest.approx(39.76, abs=1e-12)
        assert out["left_arm"] == pytest.approx(4.0, abs=1e-12)
        assert out["left_leg"] == pytest.approx(12.88, abs=1e-12)

    def test_bundled_fractions_sum_to_one(self):
        total = sum(load_mass_fractions().values())
        assert abs(total - 1.0) < 1e-3

    def test_avatar_segments_sum_to_body_weight(self):
        for pid in ALL_IDS:
            av = Avatar(load_builtin(pid))
            assert sum(av.masses.values()) == pytest.approx(av.profile.weight_kg, rel=1e-3)

    def test_dynamics_body_carries_full_weight(self):
        av = Avatar(load_builtin("daniel"), mode="active")
        assert sum(ln.mass for ln in av.body.links) == pytest.approx(av.profile.weight_kg, rel=1e-9)


class TestStrength:
    def test_mmt_scaling_exact(self):
        for pid in ALL_IDS:
            p = load_builtin(pid)
            by_name = {m["name"]: m for m in p.muscle_specs}
            for m in scaled_muscles(p):
                spec = by_name[m.name]
                assert m.f_max == (p.mmt[m.group] / 5.0) * spec["f_max_ref"]

    def test_zero_grade_silences_muscle_completely(self):
        p = load_builtin("jose")  # limbs graded 0
        for m in scaled_muscles(p):
            if "elbow" in m.group or "knee" in m.group:
                assert m.f_max == 0.0

    def test_missing_group_grade(self):
        p = load_builtin("kim")
        del p.mmt["left_elbow_flexor"]
        with pytest.raises(UnknownMuscleGroup):
            scaled_muscles(p)


class TestPhysiology:
    def test_roundtrip(self):
        av = Avatar(load_builtin("morgan"))
        av.set_physiology("heart_rate", 101.0)
        assert av.get_physiology()["heart_rate"] == 101.0
        assert av.get_physiology()["body_temperature"] == 36.9

    def test_out_of_range(self):
        av = Avatar(load_builtin("morgan"))
        with pytest.raises(OutOfPlausibleRange):
            av.set_physiology("body_temperature", 29.9)
        with pytest.raises(OutOfPlausibleRange):
            av.set_physiology("heart_rate", 251.0)

    def test_unknown_field(self):
        av = Avatar(load_builtin("morgan"))
        with pytest.raises(UnknownField):
            av.set_physiology("respiration_rate", 12.0)


class TestModes:
    def test_passive_pose_clamped_to_prom(self):
        av = Avatar(load_builtin("kim"), mode="passive")
        jid = av.model.joint_id("left_knee")
        want = np.zeros(av.pose.shape)
        want[3 * jid] = 9.0  # far past any knee range
        av.set_pose(want)
        assert av.pose[3 * jid] == av.prom["left_knee"][0, 1]

    def test_mode_gates(self):
        passive = Avatar(load_builtin("kim"), mode="passive")
        with pytest.raises(ModeMismatch):
            passive.set_joint_targets({"neck": (0.1, 0, 0)})
        with pytest.raises(ModeMismatch):
            passive.actuate({"neck_flexor": 0.5})
        active = Avatar(load_builtin("kim"), mode="active")
        with pytest.raises(ModeMismatch):
            active.set_pose(np.zeros(active.pose.shape))

    def test_actuate_validation(self):
        av = Avatar(load_builtin("karan"), mode="active")
        with pytest.raises(UnknownMuscleGroup):
            av.actuate({"wing_flexor": 0.2})
        with pytest.raises(ValueError):
            av.actuate({"neck_flexor": 1.2})

    def test_skeletal_tier_has_no_muscles_and_rejects_activations(self):
        av = Avatar(load_builtin("morgan"), mode="active", actuation="skeletal")
        assert av.muscles == []
        assert av.groups == set()
        assert av.last_forces.size == 0
        with pytest.raises(ModeMismatch):
            av.actuate({"neck_flexor": 0.5})

    def test_skeletal_tier_tracks_targets(self):
        # joint dynamics run without any muscle elements
        av = Avatar(load_builtin("morgan"), mode="active", actuation="skeletal")
        av.set_joint_targets({"neck": (0.3, 0.0, 0.0)})
        for _ in range(240):
            av.step(1.0 / 240.0)
        jid = av.model.joint_id("neck")
        assert av.pose[3 * jid] == pytest.approx(0.3, abs=1e-3)

    def test_actuation_value_checked(self):
        with pytest.raises(ValueError):
            Avatar(load_builtin("morgan"), actuation="hydraulic")

    def test_fk_memoized_until_configuration_changes(self):
        av = Avatar(load_builtin("kim"), mode="passive")
        first = av.fk()
        assert av.fk() is first
        posed = np.zeros(av.pose.shape)
        posed[3 * av.model.joint_id("neck")] = 0.2
        av.set_pose(posed)
        moved = av.fk()
        assert moved is not first
        assert av.fk() is moved

    def test_active_pose_never_leaves_arom(self):
        rng = np.random.default_rng(11)
        av = Avatar(load_builtin("daniel"), mode="active")
        targets = {}
        for name in ("neck", "left_shoulder", "right_elbow", "left_hip", "spine2"):
            targets[name] = rng.uniform(-2.0, 2.0, 3)  # mostly outside range
        av.set_joint_targets(targets)
        av.actuate({"left_shoulder_abductor": 0.6, "right_elbow_flexor": 0.8, "neck_extensor": 0.4})
        for k in range(300):
            av.step(1.0 / 240.0)
            if k % 50 == 0 or k == 299:
                for name in BODY_JOINTS:
                    j = av.model.joint_id(name)
                    ang = av.pose[3 * j : 3 * j + 3]
                    lim = av.arom[name]
                    assert np.all(ang >= lim[:, 0] - 1e-12), (name, k)
                    assert np.all(ang <= lim[:, 1] + 1e-12), (name, k)

    def test_active_tracks_reachable_target(self):
        av = Avatar(load_builtin("karan"), mode="active")
        av.set_joint_targets({"right_elbow": (0.0, 0.5, 0.0)})
        for _ in range(480):
            av.step(1.0 / 240.0)
        jid = av.model.joint_id("right_elbow")
        assert abs(av.pose[3 * jid + 1] - 0.5) < 0.05

    def test_activation_produces_flexion(self):
        quiet = Avatar(load_builtin("karan"), mode="active")
        driven = Avatar(load_builtin("karan"), mode="active")
        driven.actuate({"right_elbow_flexor": 0.5})
        for _ in range(240):
            quiet.step(1.0 / 240.0)
            driven.step(1.0 / 240.0)
        jid = quiet.model.joint_id("right_elbow")
        assert driven.pose[3 * jid + 1] > quiet.pose[3 * jid + 1] + 0.2

    def test_gravity_compensation_holds_posture(self):
        holding = Avatar(load_builtin("karan"), mode="active", gravity_comp=True)
        sagging = Avatar(load_builtin("karan"), mode="active", gravity_comp=False)
        wrist = holding.model.joint_id("right_wrist")
        rest = holding.fk()[wrist].pos.copy()
        for _ in range(480):
            holding.step(1.0 / 240.0)
            sagging.step(1.0 / 240.0)
        held = np.linalg.norm(holding.fk()[wrist].pos - rest)
        dropped = np.linalg.norm(sagging.fk()[wrist].pos - rest)
        assert held < 0.005
        assert dropped > 0.02
        assert np.linalg.norm(sagging.state.q) > 10 * np.linalg.norm(holding.state.q)

    def test_weak_avatar_saturates_inside_arom(self):
        av = Avatar(load_builtin("jose"), mode="active")
        av.set_joint_targets({"left_elbow": (0.0, -1.2, 0.0)})
        for _ in range(240):
            av.step(1.0 / 240.0)
        jid = av.model.joint_id("left_elbow")
        lo = av.arom["left_elbow"][1, 0]
        assert av.pose[3 * jid + 1] == pytest.approx(lo, abs=5e-3)
