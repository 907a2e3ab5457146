"""The six care task environments.

Object couplings follow one pattern: a grasp point near the manipulated
thing (spoon, washcloth contact, sleeve cuff, held wrist, walker handle,
lid handle). Once the end effector is inside the latch radius the object
tracks the effector under a per-tick rate limit, so any policy, scripted
or random, interacts through the same mechanism and the physics never
sees a teleport. Patients are posed statically; limb repositioning moves
the arm through passive-range-clamped inverse kinematics, which is how a
compliant person follows a caregiver's hand.

Distances are meters, forces newtons, angles radians.
"""

import numpy as np

from ..skeleton import _SKIN_BONES, joint_positions, solve_ik
from ..mathcore import quat_from_axis_angle, quat_rotate
from .base import TaskEnv, _toward


def _lerp(a, b, t):
    return a + (b - a) * t


class FeedingEnv(TaskEnv):
    """Bring a spoonful of food to the mouth without spilling.

    The spoon is a small bowl mounted above the effector; a food morsel
    rests in it from the start. Reward per control step is 0, 1, or 2:
    one point for the morsel still being in the spoon, a second for the
    spoon also being within 5 cm of the mouth. Success is a step at 2;
    the episode runs to the step cap so the bite must be held in place,
    not just touched.

    obs (18,): q(6), ee(3), spoon(3), food(3), mouth(3)
    """

    name = "feeding"
    obs_size = 18
    max_steps = 45
    terminal_on_success = False
    workspace = (np.array([-0.2, 1.2, -0.1]), np.array([0.7, 2.45, 0.55]))
    ON_SPOON = 0.035
    NEAR_MOUTH = 0.05

    def _jitter(self, scene_data):
        shift = self.rng.uniform(-0.015, 0.015, 2)
        for ent in scene_data["entities"]:
            if ent["id"] in ("arm", "spoon", "food"):
                ent["pos"][0] += shift[0]
                ent["pos"][2] += shift[1]

    def _setup(self):
        av = self.world.entity("patient").avatar
        head = joint_positions(av.model, av.pose, av.root)[av.model.joint_id("head")]
        self.mouth = head + np.array([0.0, 0.06, 0.09])
        self._waypoint = np.array([0.25, 1.85, 0.28])
        self._target = self.mouth + np.array([0.0, -0.02, 0.03])
        self._ee_prev = None

    def _commands(self, action):
        # the spoon command lands before the arm integrates, so aim it at
        # the extrapolated effector position to cancel the one tick lag
        ee = self.world.entity("arm").ee_pos()
        prev = self._ee_prev if self._ee_prev is not None else ee
        self._ee_prev = ee
        return {"arm": {"ee_target": action.tolist()},
                "spoon": {"pos": (2.0 * ee - prev).tolist()}}

    def _observe(self, sensors):
        spoon = np.array(sensors["entities"]["spoon"]["pos"])
        food = np.array(sensors["entities"]["food"]["pos"])
        return np.concatenate([self._robot_obs(sensors), spoon, food, self.mouth])

    def _reward(self, sensors):
        spoon = np.array(sensors["entities"]["spoon"]["pos"])
        food = np.array(sensors["entities"]["food"]["pos"])
        on_spoon = np.linalg.norm(food - spoon) < self.ON_SPOON
        near = np.linalg.norm(spoon - self.mouth) < self.NEAR_MOUTH
        return float(on_spoon) + float(on_spoon and near)

    def _success(self, sensors):
        return self._reward(sensors) == 2.0

    def scripted_action(self, obs):
        # polyline home -> waypoint -> mouth
        if self._script_phase == 0:
            a = self._glide(self._waypoint, 0.05)
            if np.linalg.norm(a - self._waypoint) < 0.02:
                self._script_phase = 1
            return a
        return self._glide(self._target, 0.04)


class BathingEnv(TaskEnv):
    """Wipe three points along the forearm with a light touch.

    Targets advance on contact; reward trades closeness against contact
    force, so pressing harder than needed always costs. An episode
    succeeds when all three points are visited; any tick above 20 N is
    counted as a violation.

    obs (14,): q(6), ee(3), target(3), |F|(1), visited(1)
    """

    name = "bathing"
    obs_size = 14
    max_steps = 80
    workspace = (np.array([0.1, 1.0, -0.2]), np.array([1.0, 2.3, 0.6]))
    TOUCH = 5e-4  # commanded overlap at the press point, about 5 N

    @staticmethod
    def reward_fn(dist, force):
        return -dist - 0.01 * force

    def _jitter(self, scene_data):
        shift = self.rng.uniform(-0.015, 0.015, 2)
        for ent in scene_data["entities"]:
            if ent["id"] == "arm":
                ent["pos"][0] += shift[0]
                ent["pos"][2] += shift[1]
        self._fractions = np.sort(self.rng.uniform(-0.04, 0.04, 3) + [0.3, 0.5, 0.7])

    def _setup(self):
        av = self.world.entity("patient").avatar
        pos = joint_positions(av.model, av.pose, av.root)
        elbow = pos[av.model.joint_id("left_elbow")]
        wrist = pos[av.model.joint_id("left_wrist")]
        r_arm = _SKIN_BONES["left_elbow"][1]
        off = np.array([0.0, 0.0, r_arm + 0.03 - self.TOUCH])
        self._press = [_lerp(elbow, wrist, f) + off for f in self._fractions]
        self.visited = 0

    def _ready(self):
        return self._press[0] + np.array([0.0, 0.12, 0.10])

    def _press_target(self):
        return self._press[min(self.visited, 2)]

    def _commands(self, action):
        ee = self.world.entity("arm").ee_pos()
        if self.visited < 3 and np.linalg.norm(ee - self._press_target()) < 0.005:
            self.visited += 1
        return {"arm": {"ee_target": action.tolist()}}

    def _observe(self, sensors):
        return np.concatenate([
            self._robot_obs(sensors), self._press_target(),
            [self.ee_force(sensors)], [float(self.visited)],
        ])

    def _reward(self, sensors):
        d = np.linalg.norm(self.ee_pos(sensors) - self._press_target())
        return self.reward_fn(d, self.ee_force(sensors))

    def _success(self, sensors):
        return self.visited >= 3

    def scripted_action(self, obs):
        ee, target, visited = obs[6:9], obs[9:12], int(obs[13])
        if self._script_phase == 0:
            # hover over the first wash point before touching anything
            hover = target + np.array([0.0, 0.0, 0.03])
            a = self._glide(hover, 0.03)
            if np.linalg.norm(ee - hover) < 0.012:
                self._script_phase = 1
            return a
        # creep into contact, then wipe along the arm at light pressure
        return self._glide(target, 0.0025 if visited == 0 else 0.005)


class DressingEnv(TaskEnv):
    """Pull a sleeve cuff from the hand up the forearm.

    The cuff is the pinned end ring of a cloth tube already over the
    fingertips. Pinching the fabric above the cuff latches it; the pins
    then track the effector at a capped rate while the free cloth drags
    over the hand and forearm. Success parks the cuff at mid forearm.

    obs (16,): q(6), ee(3), cuff(3), goal(3), latched(1)
    """

    name = "dressing"
    obs_size = 16
    max_steps = 80
    workspace = (np.array([0.3, 1.2, -0.3]), np.array([1.3, 2.4, 0.5]))
    GRIP = np.array([0.0, 0.075, 0.0])  # pinch point above the tube

    def _jitter(self, scene_data):
        shift = self.rng.uniform(-0.015, 0.015, 2)
        dx = self.rng.uniform(-0.015, 0.015)
        for ent in scene_data["entities"]:
            if ent["id"] == "arm":
                ent["pos"][0] += shift[0]
                ent["pos"][2] += shift[1]
            if ent["id"] == "sleeve":
                ent["translate"][0] += dx

    def _setup(self):
        av = self.world.entity("patient").avatar
        pos = joint_positions(av.model, av.pose, av.root)
        elbow = pos[av.model.joint_id("left_elbow")]
        wrist = pos[av.model.joint_id("left_wrist")]
        self.goal = _lerp(elbow, wrist, 0.45)
        self._pins = self.world.entity("sleeve").pinned
        self.latched = False

    def _ready(self):
        return self._cuff() + self.GRIP + np.array([0.0, 0.15, 0.05])

    def _cuff(self):
        return self.world.entity("sleeve").body.x[self._pins].mean(axis=0)

    def _commands(self, action):
        ee = self.world.entity("arm").ee_pos()
        cuff = self._cuff()
        gap = ee - self.GRIP - cuff
        if np.linalg.norm(ee - (cuff + self.GRIP)) < (0.10 if self.latched else 0.05):
            self.latched = True
            shift = np.clip(gap, -0.004, 0.004)
            return {"arm": {"ee_target": action.tolist()},
                    "sleeve": {"shift_pins": shift.tolist()}}
        self.latched = False
        return {"arm": {"ee_target": action.tolist()}}

    def _observe(self, sensors):
        return np.concatenate([
            self._robot_obs(sensors), self._cuff(), self.goal, [float(self.latched)],
        ])

    def _reward(self, sensors):
        return -float(np.linalg.norm(self._cuff() - self.goal))

    def _success(self, sensors):
        return np.linalg.norm(self._cuff() - self.goal) < 0.05

    def scripted_action(self, obs):
        ee, cuff = obs[6:9], obs[9:12]
        if not self.latched:
            grip = cuff + self.GRIP
            return self._glide(grip, 0.045 if np.linalg.norm(ee - grip) > 0.09 else 0.02)
        lead = cuff + _toward(np.zeros(3), self.goal - cuff, 0.04) + self.GRIP
        return self._glide(lead, 0.03)


class LimbRepositioningEnv(TaskEnv):
    """Guide the patient's wrist to a target through the passive range.

    Holding just above the wrist latches the limb; the held point then
    follows the effector at a capped rate and the arm pose is solved by
    damped least squares over the shoulder and elbow, clamped to the
    passive range of motion each step. Success brings the wrist within
    5 cm of the goal.

    obs (16,): q(6), ee(3), wrist(3), goal(3), latched(1)
    """

    name = "limb_repositioning"
    obs_size = 16
    max_steps = 70
    workspace = (np.array([0.0, 0.9, -0.2]), np.array([1.1, 2.3, 0.6]))
    # standoff above the wrist; must clear forearm+tool radii (0.065) by
    # enough to absorb a one step solver stall during the drag
    GRIP = np.array([0.0, 0.095, 0.0])

    def _jitter(self, scene_data):
        shift = self.rng.uniform(-0.015, 0.015, 2)
        for ent in scene_data["entities"]:
            if ent["id"] == "arm":
                ent["pos"][0] += shift[0]
                ent["pos"][2] += shift[1]
        self._goal_nominal = np.array([0.45, 1.2, 0.28]) + self.rng.uniform(-0.02, 0.02, 3)

    def _setup(self):
        self._av = self.world.entity("patient").avatar
        self._free = ["left_shoulder", "left_elbow"]
        # project the nominal goal onto what the passive range can reach
        pose, info = solve_ik(
            self._av.model, self._av.pose, "left_wrist", self._goal_nominal,
            root_transform=self._av.root, limits=self._av.prom,
            free_joints=self._free, max_iters=60,
        )
        self.goal = joint_positions(self._av.model, pose, self._av.root)[
            self._av.model.joint_id("left_wrist")]
        self.latched = False
        self._hold = self._wrist()

    def _ready(self):
        return self._wrist() + self.GRIP + np.array([0.0, 0.15, 0.08])

    def _wrist(self):
        return joint_positions(self._av.model, self._av.pose, self._av.root)[
            self._av.model.joint_id("left_wrist")]

    def _commands(self, action):
        cmds = {"arm": {"ee_target": action.tolist()}}
        if self._tick % self.ticks_per_step != 0:
            return cmds
        ee = self.world.entity("arm").ee_pos()
        wrist = self._wrist()
        gap = np.linalg.norm(ee - (wrist + self.GRIP))
        if gap < (0.12 if self.latched else 0.03):
            if not self.latched:
                # engage from where the limb actually is, never yank it
                self._hold = wrist.copy()
            self.latched = True
            self._hold = _toward(self._hold, ee - self.GRIP, 0.015)
            pose, _ = solve_ik(
                self._av.model, self._av.pose, "left_wrist", self._hold,
                root_transform=self._av.root, limits=self._av.prom,
                free_joints=self._free, max_iters=10, tol=1e-3,
            )
            cmds["patient"] = {"pose": pose.tolist()}
        else:
            self.latched = False
            self._hold = wrist.copy()
        return cmds

    def _observe(self, sensors):
        return np.concatenate([
            self._robot_obs(sensors), self._wrist(), self.goal, [float(self.latched)],
        ])

    def _reward(self, sensors):
        return -float(np.linalg.norm(self._wrist() - self.goal))

    def _success(self, sensors):
        return np.linalg.norm(self._wrist() - self.goal) < 0.05

    def scripted_action(self, obs):
        ee, wrist = obs[6:9], obs[9:12]
        if not self.latched:
            grip = wrist + self.GRIP
            return self._glide(grip, 0.045 if np.linalg.norm(ee - grip) > 0.09 else 0.02)
        lead = wrist + _toward(np.zeros(3), self.goal - wrist, 0.04) + self.GRIP
        return self._glide(lead, 0.03)


class AmbulatingEnv(TaskEnv):
    """Roll a gait trainer forward to the patient by its handle.

    The trainer is a slider prop; grabbing the free-floating handle
    point latches it, after which the joint follows the effector's
    displacement along the slide axis under a rate cap.

    obs (15,): q(6), ee(3), handle(3), pos(1), goal(1), latched(1)
    """

    name = "ambulating"
    obs_size = 15
    max_steps = 60
    workspace = (np.array([0.0, 0.5, -0.2]), np.array([1.1, 2.0, 0.9]))
    HANDLE = np.array([0.0, 0.95, -0.05])  # handle point in the prop frame

    def _jitter(self, scene_data):
        shift = self.rng.uniform(-0.015, 0.015, 2)
        for ent in scene_data["entities"]:
            if ent["id"] == "arm":
                ent["pos"][0] += shift[0]
                ent["pos"][2] += shift[1]
        self.goal = 0.35 + self.rng.uniform(-0.03, 0.03)

    def _setup(self):
        prop = self.world.entity("chair")
        self._anchor = np.asarray(prop.anchor, dtype=float)
        self._axis = np.asarray(prop.axis, dtype=float)
        self._handle0 = self._anchor + self.HANDLE
        self.latched = False

    def _ready(self):
        return self._handle0 + np.array([0.0, 0.10, 0.0])

    def _handle(self):
        return self._handle0 + self._axis * self.world.entity("chair").pos

    def _commands(self, action):
        ee = self.world.entity("arm").ee_pos()
        prop = self.world.entity("chair")
        if np.linalg.norm(ee - self._handle()) < (0.09 if self.latched else 0.035):
            self.latched = True
            want = float(np.dot(ee - self._handle0, self._axis))
            return {"arm": {"ee_target": action.tolist()},
                    "chair": {"pos": prop.pos + np.clip(want - prop.pos, -0.008, 0.008)}}
        self.latched = False
        return {"arm": {"ee_target": action.tolist()}}

    def _observe(self, sensors):
        return np.concatenate([
            self._robot_obs(sensors), self._handle(),
            [self.world.entity("chair").pos], [self.goal], [float(self.latched)],
        ])

    def _reward(self, sensors):
        return -abs(self.world.entity("chair").pos - self.goal)

    def _success(self, sensors):
        return abs(self.world.entity("chair").pos - self.goal) < 0.03

    def scripted_action(self, obs):
        ee, handle, pos = obs[6:9], obs[9:12], obs[12]
        if not self.latched:
            return self._glide(handle, 0.045 if np.linalg.norm(ee - handle) > 0.09 else 0.02)
        lead = self._handle0 + self._axis * min(self.goal, pos + 0.05)
        return self._glide(lead, 0.03)


class ToiletingEnv(TaskEnv):
    """Swing a commode lid open by its handle to at least 80 degrees.

    The lid is a hinge prop. The handle rides the lid edge; once
    latched, the hinge angle tracks the effector's angle about the
    hinge axis under a rate cap. Reward is the opening angle itself.

    obs (14,): q(6), ee(3), handle(3), angle(1), latched(1)
    """

    name = "toileting"
    obs_size = 14
    max_steps = 60
    workspace = (np.array([0.1, 0.3, -0.3]), np.array([1.1, 1.9, 0.7]))
    HANDLE = np.array([0.0, 0.075, 0.40])  # in the lid frame, above the far edge
    OPEN = 1.396  # 80 degrees

    def _jitter(self, scene_data):
        shift = self.rng.uniform(-0.015, 0.015, 2)
        for ent in scene_data["entities"]:
            if ent["id"] == "arm":
                ent["pos"][0] += shift[0]
                ent["pos"][2] += shift[1]

    def _setup(self):
        prop = self.world.entity("lid")
        self._anchor = np.asarray(prop.anchor, dtype=float)
        self._axis = np.asarray(prop.axis, dtype=float)
        self._delta0 = np.arctan2(self.HANDLE[1], self.HANDLE[2])
        self.latched = False

    def _ready(self):
        return self._anchor + self.HANDLE + np.array([0.0, 0.12, 0.0])

    def _handle(self):
        theta = self.world.entity("lid").pos
        q = quat_from_axis_angle(self._axis, theta)
        return self._anchor + quat_rotate(q, self.HANDLE)

    def _commands(self, action):
        ee = self.world.entity("arm").ee_pos()
        prop = self.world.entity("lid")
        if np.linalg.norm(ee - self._handle()) < (0.11 if self.latched else 0.035):
            self.latched = True
            v = ee - self._anchor
            want = np.arctan2(v[1], v[2]) - self._delta0
            return {"arm": {"ee_target": action.tolist()},
                    "lid": {"pos": prop.pos + float(np.clip(want - prop.pos, -0.03, 0.03))}}
        self.latched = False
        return {"arm": {"ee_target": action.tolist()}}

    def _observe(self, sensors):
        return np.concatenate([
            self._robot_obs(sensors), self._handle(),
            [self.world.entity("lid").pos], [float(self.latched)],
        ])

    def _reward(self, sensors):
        return float(self.world.entity("lid").pos)

    def _success(self, sensors):
        return self.world.entity("lid").pos >= self.OPEN

    def scripted_action(self, obs):
        ee, handle, theta = obs[6:9], obs[9:12], obs[12]
        if not self.latched:
            return self._glide(handle, 0.045 if np.linalg.norm(ee - handle) > 0.09 else 0.02)
        lead = min(theta + 0.18, 1.62)
        q = quat_from_axis_angle(self._axis, lead)
        return self._glide(self._anchor + quat_rotate(q, self.HANDLE), 0.05)
