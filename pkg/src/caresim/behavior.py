"""Behavior trees for caregiving routines.

Small synchronous tree: composite nodes (sequence, selector, parallel,
repeat, invert) over callable leaves (actions return a status, conditions
return a bool). Trees tick against a caller-owned context dict and append
a (node name, status) visit trace each tick, which makes short-circuit
and resume behavior observable from outside.

Trees load from JSON with a bindings table mapping leaf names to
factories; the bundled exercise-coach routine lives under
assets/behaviors/coach_exercise.json.
"""

import json
import os

import numpy as np

SUCCESS = "success"
FAILURE = "failure"
RUNNING = "running"


class UnboundLeaf(Exception):
    """Tree JSON names a leaf with no factory in the bindings table."""


def _emit(ctx, kind, detail):
    ctx.setdefault("events", []).append((kind, detail))


class Node:
    def __init__(self, name):
        self.name = name

    def tick(self, ctx):
        status = self._tick(ctx)
        ctx.setdefault("_trace", []).append((self.name, status))
        return status

    def _tick(self, ctx):
        raise NotImplementedError

    def reset(self):
        pass


class Sequence(Node):
    """Children in order; failure aborts. With memory, a running child is
    resumed next tick instead of re-ticking earlier children."""

    def __init__(self, name, children, memory=True):
        super().__init__(name)
        self.children = children
        self.memory = memory
        self._cursor = 0

    def _tick(self, ctx):
        start = self._cursor if self.memory else 0
        for i in range(start, len(self.children)):
            status = self.children[i].tick(ctx)
            if status == RUNNING:
                self._cursor = i
                return RUNNING
            if status == FAILURE:
                self.reset()
                return FAILURE
        self.reset()
        return SUCCESS

    def reset(self):
        self._cursor = 0
        for c in self.children:
            c.reset()


class Selector(Node):
    """First succeeding child wins; all failing fails."""

    def __init__(self, name, children, memory=True):
        super().__init__(name)
        self.children = children
        self.memory = memory
        self._cursor = 0

    def _tick(self, ctx):
        start = self._cursor if self.memory else 0
        for i in range(start, len(self.children)):
            status = self.children[i].tick(ctx)
            if status == RUNNING:
                self._cursor = i
                return RUNNING
            if status == SUCCESS:
                self.reset()
                return SUCCESS
        self.reset()
        return FAILURE

    def reset(self):
        self._cursor = 0
        for c in self.children:
            c.reset()


class Parallel(Node):
    """Tick every child each tick; succeed when at least `threshold`
    report success, fail once that becomes impossible."""

    def __init__(self, name, children, threshold):
        super().__init__(name)
        if not (1 <= threshold <= len(children)):
            raise ValueError(f"threshold {threshold} outside 1..{len(children)}")
        self.children = children
        self.threshold = threshold

    def _tick(self, ctx):
        n_success = n_failure = 0
        for c in self.children:
            status = c.tick(ctx)
            if status == SUCCESS:
                n_success += 1
            elif status == FAILURE:
                n_failure += 1
        if n_success >= self.threshold:
            self.reset()
            return SUCCESS
        if n_failure > len(self.children) - self.threshold:
            self.reset()
            return FAILURE
        return RUNNING

    def reset(self):
        for c in self.children:
            c.reset()


class Repeat(Node):
    """Retry the child until it succeeds; a failing child is reset and
    tried again next tick (bounded by max_cycles, unbounded by default)."""

    def __init__(self, name, child, max_cycles=None):
        super().__init__(name)
        self.child = child
        self.max_cycles = max_cycles
        self._cycles = 0

    def _tick(self, ctx):
        status = self.child.tick(ctx)
        if status == SUCCESS:
            self.reset()
            return SUCCESS
        if status == FAILURE:
            self._cycles += 1
            self.child.reset()
            if self.max_cycles is not None and self._cycles >= self.max_cycles:
                self.reset()
                return FAILURE
        return RUNNING

    def reset(self):
        self._cycles = 0
        self.child.reset()


class Invert(Node):
    def __init__(self, name, child):
        super().__init__(name)
        self.child = child

    def _tick(self, ctx):
        status = self.child.tick(ctx)
        if status == SUCCESS:
            return FAILURE
        if status == FAILURE:
            return SUCCESS
        return RUNNING

    def reset(self):
        self.child.reset()


class Action(Node):
    """Leaf wrapping a callable(ctx) -> status. Stateful callables may
    expose reset()."""

    def __init__(self, name, fn):
        super().__init__(name)
        self.fn = fn

    def _tick(self, ctx):
        status = self.fn(ctx)
        if status not in (SUCCESS, FAILURE, RUNNING):
            raise ValueError(f"action {self.name!r} returned {status!r}")
        return status

    def reset(self):
        if hasattr(self.fn, "reset"):
            self.fn.reset()


class Condition(Node):
    """Leaf wrapping a callable(ctx) -> bool."""

    def __init__(self, name, fn):
        super().__init__(name)
        self.fn = fn

    def _tick(self, ctx):
        return SUCCESS if self.fn(ctx) else FAILURE

    def reset(self):
        if hasattr(self.fn, "reset"):
            self.fn.reset()


def tick_tree(root, ctx):
    """Tick once; returns (status, trace) where trace is the visit list
    for this tick only."""
    ctx["_trace"] = []
    status = root.tick(ctx)
    return status, list(ctx["_trace"])


# ---------------------------------------------------------------------------
# JSON loading

def load_tree(spec, bindings):
    """Build a tree from a JSON-shaped dict.

    Composite nodes: {"type": "sequence"|"selector"|"parallel"|"repeat"|
    "invert", ...}. Leaves: {"type": "action"|"condition", "name": ...,
    "params": {...}} where bindings[name](params) returns the callable.
    """
    kind = spec["type"]
    name = spec.get("name", kind)
    if kind == "sequence":
        return Sequence(name, [load_tree(c, bindings) for c in spec["children"]], memory=spec.get("memory", True))
    if kind == "selector":
        return Selector(name, [load_tree(c, bindings) for c in spec["children"]], memory=spec.get("memory", True))
    if kind == "parallel":
        return Parallel(name, [load_tree(c, bindings) for c in spec["children"]], threshold=spec["threshold"])
    if kind == "repeat":
        return Repeat(name, load_tree(spec["child"], bindings), max_cycles=spec.get("max_cycles"))
    if kind == "invert":
        return Invert(name, load_tree(spec["child"], bindings))
    if kind in ("action", "condition"):
        leaf_name = spec["name"]
        factory = bindings.get(leaf_name)
        if factory is None:
            raise UnboundLeaf(f"no binding for leaf {leaf_name!r}")
        fn = factory(spec.get("params", {}))
        return Action(leaf_name, fn) if kind == "action" else Condition(leaf_name, fn)
    raise ValueError(f"unknown node type {kind!r}")


def load_tree_file(path, bindings):
    with open(path) as fh:
        return load_tree(json.load(fh), bindings)


# ---------------------------------------------------------------------------
# pose matching and the exercise coach

def match_pose(pose, targets, tol):
    """True when every targeted axis is within tol radians.

    targets: {joint_id: (3,) angles}; pose: flat Euler vector.
    """
    pose = np.asarray(pose, dtype=float)
    for jid, want in targets.items():
        got = pose[3 * jid : 3 * jid + 3]
        if np.any(np.abs(got - np.asarray(want, dtype=float)) > tol):
            return False
    return True


class _Demonstrate:
    """Plays a demonstration cycle: ramps ctx["demo_phase"] 0 -> 1 over
    `ticks` ticks, then reports success while the exercise stays current."""

    def __init__(self, exercise, ticks):
        self.exercise = exercise
        self.ticks = ticks
        self._t = 0

    def __call__(self, ctx):
        ctx["exercise"] = self.exercise
        if self._t < self.ticks:
            self._t += 1
            ctx["demo_phase"] = self._t / self.ticks
            return RUNNING
        return SUCCESS

    def reset(self):
        self._t = 0


class _MatchPose:
    """Checks ctx["pose"] against the exercise targets and reports the
    comparison as a coaching event."""

    def __init__(self, exercise, targets, tol):
        self.exercise = exercise
        self.targets = targets  # {joint name: 3 angles}
        self.tol = tol

    def __call__(self, ctx):
        model = ctx["model"]
        resolved = {model.joint_id(j): a for j, a in self.targets.items()}
        ok = match_pose(ctx["pose"], resolved, self.tol)
        _emit(ctx, "keep_going" if ok else "mismatch", self.exercise)
        return ok


def coach_bindings():
    return {
        "demonstrate": lambda p: _Demonstrate(p["exercise"], p.get("ticks", 10)),
        "match_pose": lambda p: _MatchPose(p["exercise"], p["targets"], p.get("tol", 0.25)),
    }


def coach_tree_path():
    return os.path.join(os.path.dirname(__file__), "assets", "behaviors", "coach_exercise.json")


def build_coach_tree(path=None):
    """The bundled guided-exercise routine: five exercises in sequence,
    each repeating (demonstrate in parallel with pose matching) until the
    avatar's pose matches while the demonstration is complete."""
    return load_tree_file(path or coach_tree_path(), coach_bindings())
