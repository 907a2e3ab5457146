import numpy as np
import pytest

from caresim.muscle import (
    ActivationOutOfRange,
    DanglingWaypoint,
    Muscle,
    MuscleBatch,
    MuscleState,
    MuscleWaypoint,
    contractile_force,
    force_length,
    force_velocity,
    muscle_torques,
    passive_force,
    path_length,
    total_force,
    tree_path,
    update_state,
)
from caresim.skeleton import POSE_SIZE, REF_DIMS, build_skeleton, forward_kinematics


@pytest.fixture
def model():
    return build_skeleton(dict(REF_DIMS))


def elbow_flexor():
    return Muscle(
        name="left_elbow_flexor",
        group="left_elbow_flexor",
        waypoints=[
            MuscleWaypoint("left_shoulder", np.array([0.14, 0.02, 0.0])),
            MuscleWaypoint("left_elbow", np.array([0.05, 0.02, 0.0])),
        ],
        f_max=400.0,
        l_opt=0.12,
        l_slack=0.08,
    )


class TestCurves:
    def test_zero_activation_zero_contractile(self):
        assert contractile_force(0.0, 500.0, 0.1, -0.05, 0.1) == 0.0

    def test_isometric_optimum_is_f_max(self):
        # f_L(l_opt) = 1 and f_V(0) = 1 exactly
        assert contractile_force(1.0, 321.5, 0.1, 0.0, 0.1) == 321.5

    def test_linear_in_activation(self):
        f1 = contractile_force(0.25, 400.0, 0.11, -0.02, 0.1)
        f2 = contractile_force(0.5, 400.0, 0.11, -0.02, 0.1)
        f3 = contractile_force(1.0, 400.0, 0.11, -0.02, 0.1)
        assert abs(f2 - 2.0 * f1) < 1e-12
        assert abs(f3 - 4.0 * f1) < 1e-12

    def test_force_velocity_monotone(self):
        l_opt = 0.1
        vs = np.linspace(-1.5 * l_opt * 10, 1.5 * l_opt * 10, 301)
        fv = [force_velocity(v, l_opt) for v in vs]
        assert all(b >= a - 1e-15 for a, b in zip(fv, fv[1:]))
        assert force_velocity(0.0, l_opt) == 1.0
        # shortening faster than v_max produces no force
        assert force_velocity(-11.0 * l_opt, l_opt) == 0.0
        # lengthening saturates below the eccentric cap
        assert force_velocity(1e9, l_opt) < 1.4 + 1e-9

    def test_force_length_peak(self):
        l_opt = 0.12
        assert force_length(l_opt, l_opt) == 1.0
        assert force_length(0.7 * l_opt, l_opt) < 1.0
        assert force_length(1.3 * l_opt, l_opt) < 1.0

    def test_passive_engages_past_optimum(self):
        assert passive_force(0.09, 0.1, 500.0) == 0.0
        assert passive_force(0.1, 0.1, 500.0) == 0.0
        assert passive_force(0.12, 0.1, 500.0) > 0.0
        # stiffening: equal length steps give growing force steps
        f1 = passive_force(0.11, 0.1, 500.0)
        f2 = passive_force(0.12, 0.1, 500.0)
        f3 = passive_force(0.13, 0.1, 500.0)
        assert f3 - f2 > f2 - f1

    def test_activation_out_of_range(self):
        with pytest.raises(ActivationOutOfRange):
            contractile_force(1.2, 100.0, 0.1, 0.0, 0.1)
        with pytest.raises(ActivationOutOfRange):
            contractile_force(-0.01, 100.0, 0.1, 0.0, 0.1)


class TestPath:
    def test_straight_segment_length(self, model):
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        m = elbow_flexor()
        # T pose: both waypoints sit on the +x arm axis shifted +y 0.02;
        # distance is purely the x gap
        p_sh = tf[model.joint_id("left_shoulder")].pos
        p_el = tf[model.joint_id("left_elbow")].pos
        expected = np.linalg.norm((p_el + [0.05, 0.02, 0]) - (p_sh + [0.14, 0.02, 0]))
        assert abs(path_length(model, tf, m) - expected) < 1e-12

    def test_dangling_waypoint(self, model):
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        m = elbow_flexor()
        m.waypoints[0] = MuscleWaypoint("left_scapula", np.zeros(3))
        with pytest.raises(DanglingWaypoint):
            path_length(model, tf, m)

    def test_tree_path_excludes_common_ancestor(self, model):
        a = model.joint_id("left_collar")
        b = model.joint_id("right_collar")
        a_side, b_side = tree_path(model, a, b)
        assert a in a_side and b in b_side
        assert model.joint_id("spine3") not in a_side + b_side

    def test_tree_path_linear_chain(self, model):
        a = model.joint_id("left_shoulder")
        b = model.joint_id("left_wrist")
        a_side, b_side = tree_path(model, a, b)
        assert a_side == []  # a is the ancestor itself
        assert set(b_side) == {model.joint_id("left_wrist"), model.joint_id("left_elbow")}


class TestTorques:
    def test_magnitude_matches_moment_arm(self, model):
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        m = elbow_flexor()
        f = 250.0
        _, jt = muscle_torques(model, tf, [m], [f])
        ei = model.joint_id("left_elbow")
        pts_sh = tf[model.joint_id("left_shoulder")].pos + np.array([0.14, 0.02, 0])
        pts_el = tf[ei].pos + np.array([0.05, 0.02, 0])
        s = (pts_el - pts_sh) / np.linalg.norm(pts_el - pts_sh)
        expected = f * np.linalg.norm(np.cross(pts_el - tf[ei].pos, s))
        assert abs(np.linalg.norm(jt[ei]) - expected) < 1e-12

    def test_linear_in_tension(self, model):
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        m = elbow_flexor()
        tau1, _ = muscle_torques(model, tf, [m], [100.0])
        tau3, _ = muscle_torques(model, tf, [m], [300.0])
        np.testing.assert_allclose(tau3, 3.0 * tau1, atol=1e-12)

    def test_flexor_sign(self, model):
        # waypoints above the arm axis: tension must curl the forearm up,
        # a positive rotation about the elbow z axis
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        tau, _ = muscle_torques(model, tf, [elbow_flexor()], [100.0])
        ei = model.joint_id("left_elbow")
        assert tau[3 * ei + 2] > 0.0

    def test_only_spanned_joints_loaded(self, model):
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        tau, jt = muscle_torques(model, tf, [elbow_flexor()], [100.0])
        loaded = {i for i in range(len(model.names)) if np.any(jt[i])}
        assert loaded == {model.joint_id("left_elbow")}

    def test_cross_tree_muscle_skips_ancestor(self, model):
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        m = Muscle(
            name="chest_band",
            group="chest",
            waypoints=[
                MuscleWaypoint("left_collar", np.array([0.05, 0.0, 0.02])),
                MuscleWaypoint("right_collar", np.array([-0.05, 0.0, 0.02])),
            ],
            f_max=200.0,
            l_opt=0.2,
            l_slack=0.05,
        )
        _, jt = muscle_torques(model, tf, [m], [150.0])
        assert np.any(jt[model.joint_id("left_collar")])
        assert np.any(jt[model.joint_id("right_collar")])
        assert not np.any(jt[model.joint_id("spine3")])


class TestStateUpdate:
    def test_first_step_velocity_zero(self, model):
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        m = elbow_flexor()
        st = update_state(model, tf, m, MuscleState(), 0.5, 1e-3)
        assert st.v_ce == 0.0
        assert st.force == total_force(0.5, m.f_max, st.l_ce, 0.0, m.l_opt)

    def test_backward_difference_velocity(self, model):
        m = elbow_flexor()
        st = MuscleState()
        pose = np.zeros(POSE_SIZE)
        tf = forward_kinematics(model, pose)
        update_state(model, tf, m, st, 0.2, 1e-3)
        l0 = st.l_ce
        ei = model.joint_id("left_elbow")
        pose[3 * ei + 2] = 0.3  # flex: the path shortens
        tf = forward_kinematics(model, pose)
        update_state(model, tf, m, st, 0.2, 1e-3)
        assert st.v_ce == pytest.approx((st.l_ce - l0) / 1e-3)
        assert st.v_ce < 0.0


class TestBatch:
    def test_matches_scalar_path(self, model):
        muscles = [elbow_flexor()]
        muscles.append(
            Muscle(
                name="neck_flexor",
                group="neck_flexor",
                waypoints=[
                    MuscleWaypoint("spine3", np.array([0.0, 0.05, 0.04])),
                    MuscleWaypoint("neck", np.array([0.0, 0.02, 0.03])),
                    MuscleWaypoint("head", np.array([0.0, 0.02, 0.03])),
                ],
                f_max=150.0,
                l_opt=0.08,
                l_slack=0.05,
            )
        )
        batch = MuscleBatch(model, muscles)
        rng = np.random.default_rng(7)
        pose = np.zeros(POSE_SIZE)
        body = [model.joint_id(n) for n in ("left_shoulder", "left_elbow", "neck", "head")]
        states = [MuscleState() for _ in muscles]
        for step in range(5):
            for i in body:
                pose[3 * i : 3 * i + 3] += rng.normal(scale=0.05, size=3)
            tf = forward_kinematics(model, pose)
            act = rng.uniform(0.0, 1.0, size=len(muscles))
            fb = batch.forces(tf, act, 1e-3)
            fs = [
                update_state(model, tf, m, st, a, 1e-3).force
                for m, st, a in zip(muscles, states, act)
            ]
            # summation order differs between the flat arrays and the
            # per-muscle path walk; the backward-difference velocity
            # divides that tiny gap by dt, so allow a few ulps more
            np.testing.assert_allclose(fb, fs, rtol=1e-9, atol=1e-9)

    def test_batch_lengths(self, model):
        muscles = [elbow_flexor()]
        batch = MuscleBatch(model, muscles)
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        np.testing.assert_allclose(
            batch.lengths(tf), [path_length(model, tf, muscles[0])], atol=1e-12
        )

    def test_batch_rejects_bad_activation(self, model):
        batch = MuscleBatch(model, [elbow_flexor()])
        tf = forward_kinematics(model, np.zeros(POSE_SIZE))
        with pytest.raises(ActivationOutOfRange):
            batch.forces(tf, [1.5], 1e-3)
