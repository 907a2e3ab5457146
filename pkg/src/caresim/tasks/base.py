"""Episode scaffolding shared by the care task environments.

Every task drives the same 6-dof arm inside a scene built from a bundled
JSON file. Control runs at 20 Hz regardless of the scene's physics rate;
an action is a Cartesian end effector target, clamped to the task's
workspace box, and the environment translates it (plus any task coupling
such as a held prop or a grasped limb) into per-tick world commands.

step() returns (obs, reward, done, info). Observations are flat float
vectors whose layout each environment documents. Episodes end on task
success or after max_steps control steps. Seeding is explicit: the same
seed reproduces the same jitter and the same random-policy actions.
"""

import copy
import json
import os

import numpy as np

from ..world import load_scene

CONTROL_HZ = 20
FORCE_LIMIT = 20.0  # N, care force ceiling; ticks above it count as violations


def _tasks_root():
    return os.path.join(os.path.dirname(__file__), "..", "assets", "tasks")


def _toward(current, target, rate):
    """Step current toward target, at most rate per call (per component)."""
    return current + np.clip(target - current, -rate, rate)


class TaskEnv:
    name = ""
    max_steps = 60
    terminal_on_success = True
    # workspace box the actions are clamped to: (lo, hi)
    workspace = (np.array([-0.5, 0.2, -0.5]), np.array([1.2, 2.0, 0.8]))

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)
        path = os.path.join(_tasks_root(), f"{self.name}.json")
        with open(path) as fh:
            self._scene_data = json.load(fh)
        self._scene_path = path
        self.world = None
        self.steps = 0
        self._home = None

    # -- episode control ------------------------------------------------

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        data = copy.deepcopy(self._scene_data)
        self._jitter(data)
        self.world = load_scene(data, scene_path=self._scene_path)
        self.steps = 0
        self._tick = 0
        self.peak_force = 0.0
        self.force_violations = 0
        self.force_trace = []
        self._carrot = None
        self._script_phase = 0
        self._setup()
        ready = self._ready()
        if ready is not None:
            # tuck to a ready pose near the work zone before the episode
            ready = np.asarray(ready, dtype=float)
            for _ in range(150):
                self._last = self.world.step(self._commands(ready))
                if np.linalg.norm(self.world.entity("arm").ee_pos() - ready) < 0.025:
                    break
        self._tick = 0
        self.peak_force = 0.0
        self.force_violations = 0
        self.force_trace = []
        self._last = self.world.read_sensors()
        self._home = np.array(self._last["entities"]["arm"]["ee_pos"])
        return self._observe(self._last)

    @property
    def ticks_per_step(self):
        return max(1, round(1.0 / (self.world.dt * CONTROL_HZ)))

    def step(self, action):
        if self.world is None:
            raise RuntimeError("call reset() before step()")
        action = np.clip(np.asarray(action, dtype=float), *self.workspace)
        for _ in range(self.ticks_per_step):
            self._last = self.world.step(self._commands(action))
            self._tick += 1
            f = self.ee_force(self._last)
            self.peak_force = max(self.peak_force, f)
            self.force_trace.append(f)
            if f > FORCE_LIMIT:
                self.force_violations += 1
        sensors = self._last
        self.steps += 1
        obs = self._observe(sensors)
        reward = self._reward(sensors)
        success = self._success(sensors)
        done = (success and self.terminal_on_success) or self.steps >= self.max_steps
        info = {"success": success, "force_violations": self.force_violations,
                "peak_force": self.peak_force}
        return obs, reward, done, info

    # -- per-task hooks ---------------------------------------------------

    def _jitter(self, scene_data):
        """Perturb the scene dict in place before loading."""

    def _setup(self):
        """Cache landmarks from the freshly loaded world."""

    def _ready(self):
        """Ready-pose point the arm tucks to during reset; None skips."""
        return None

    def _commands(self, action):
        """World commands for one tick; couplings read self.world directly."""
        return {"arm": {"ee_target": action.tolist()}}

    def _observe(self, sensors):
        raise NotImplementedError

    def _reward(self, sensors):
        raise NotImplementedError

    def _success(self, sensors):
        return False

    # -- reference policies -----------------------------------------------

    def scripted_action(self, obs):
        """Deterministic hand-written controller; uses self.steps as phase."""
        raise NotImplementedError

    def random_action(self):
        lo, hi = self.workspace
        return self.rng.uniform(lo, hi)

    def zero_action(self):
        """Hold the initial end effector position."""
        return self._home.copy()

    # -- shared helpers -----------------------------------------------------

    def _glide(self, goal, rate):
        """Scripted-policy trajectory carrot: a point that walks toward goal
        at a fixed rate per control step, so the arm tracks a ramp instead
        of chasing its own lagging position."""
        if self._carrot is None:
            self._carrot = self.ee_pos(self._last).copy()
        self._carrot = _toward(self._carrot, np.asarray(goal, dtype=float), rate)
        return self._carrot.copy()

    def _robot_obs(self, sensors):
        rb = sensors["entities"]["arm"]
        q = np.array([rb["q"][k] for k in sorted(rb["q"])])
        return np.concatenate([q, np.array(rb["ee_pos"])])

    def ee_pos(self, sensors):
        return np.array(sensors["entities"]["arm"]["ee_pos"])

    def ee_force(self, sensors):
        return float(np.linalg.norm(sensors["entities"]["arm"]["ee_force"]))


def rollout(env, policy, seed=None):
    """Run one episode; policy(obs) -> action. Returns (total, success, steps)."""
    obs = env.reset(seed=seed)
    total = 0.0
    success = False
    while True:
        obs, reward, done, info = env.step(policy(obs))
        total += reward
        success = success or info["success"]
        if done:
            return total, success, env.steps


def run_scripted(env, seed=None):
    return rollout(env, lambda obs: env.scripted_action(obs), seed=seed)


def run_random(env, seed=None):
    return rollout(env, lambda obs: env.random_action(), seed=seed)
