"""Protocol server: scene control, stepping, sensing, and task episodes
over the wire format, one independent session per connection.

`dispatch` is a pure request handler shared by the TCP loop and by
in-process callers, which is what makes remote/local equivalence a
property of construction rather than a promise: the network path adds
only framing around the exact same function. A session owns at most one
simulation (a raw scene or a task environment); stepping is entirely
client-driven, so an idle connection costs nothing.

Structured errors (UnknownKind, SceneNotLoaded, ValidationError) travel
as normal responses with kind "Error"; only framing violations close
the connection.
"""

import os
import socketserver
import threading

import numpy as np

from . import behavior
from .avatar import ModeMismatch, OutOfPlausibleRange, UnknownField, UnknownMuscleGroup
from .tasks import TASKS, make
from .wire import ProtocolError, check_envelope, read_frame, write_frame
from .world import UnknownEntity, load_scene

DEFAULT_PORT = 9500
PORT_ENV_VAR = "CARESIM_PORT"

KINDS = (
    "Ping", "LoadScene", "Reset", "Step", "GetState",
    "SetJointTargets", "SetMuscleActivations", "GetSensors",
    "SetPhysiology", "TickBehavior", "EnvMake", "EnvReset", "EnvStep",
    "Shutdown",
)


def default_port():
    return int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT))


class Session:
    """Per-connection state: one scene or one task env, never both."""

    def __init__(self, scene_root="."):
        self.scene_root = scene_root
        self.world = None
        self.env = None
        self._scene_src = None
        self._scene_path = None
        self._tree = None
        self._tree_ctx = None
        self.closed = False


def _ok(rid, kind, payload):
    return {"id": rid, "kind": kind + "Result", "payload": payload}


def _err(rid, family, message, path=None):
    payload = {"error": family, "message": message}
    if path is not None:
        payload["path"] = path
    return {"id": rid, "kind": "Error", "payload": payload}


class _Invalid(Exception):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class _NoScene(_Invalid):
    """Command needs a scene or env and the session has neither."""


def _field(payload, name, types, required=True, default=None):
    if name not in payload or payload[name] is None and not required:
        if required:
            raise _Invalid(f"missing field {name!r}", path=f"payload.{name}")
        return default
    value = payload[name]
    tt = types if isinstance(types, tuple) else (types,)
    if isinstance(value, bool) and bool not in tt or not isinstance(value, tt):
        raise _Invalid(f"field {name!r} has the wrong type", path=f"payload.{name}")
    return value


def _vector(payload, name, size=None):
    raw = _field(payload, name, list)
    try:
        vec = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise _Invalid(f"field {name!r} must be a number list", path=f"payload.{name}")
    if vec.ndim != 1 or (size is not None and vec.shape != (size,)):
        raise _Invalid(f"field {name!r} must be a flat vector"
                       + (f" of length {size}" if size else ""), path=f"payload.{name}")
    if not np.all(np.isfinite(vec)):
        raise _Invalid(f"field {name!r} contains non-finite values", path=f"payload.{name}")
    return vec


# -- state serialization ------------------------------------------------------

def world_state(world):
    """Deterministic full-state snapshot, plain JSON types only."""
    ents = {}
    for eid in sorted(world.entities):
        ent = world.entities[eid]
        rec = {"kind": ent.kind}
        if ent.kind == "rigid":
            rec.update(pos=ent.pos.tolist(), rot=ent.rot.tolist(),
                       vel=ent.vel.tolist(), omega=ent.omega.tolist(),
                       kinematic=ent.kinematic)
        elif ent.kind == "robot":
            rec.update(q=ent.state.q.tolist(), qd=ent.state.qd.tolist(),
                       targets=ent.targets.tolist(), ee_pos=ent.ee_pos().tolist())
        elif ent.kind == "avatar":
            av = ent.avatar
            rec.update(mode=av.mode, actuation=av.actuation, pose=av.pose.tolist(),
                       root_pos=av.root.pos.tolist(), root_rot=av.root.rot.tolist(),
                       physiology=av.get_physiology(),
                       activations=dict(av.activations))
        elif ent.kind == "prop":
            rec.update(pos=ent.pos)
        elif ent.kind == "soft":
            rec.update(x=ent.body.x.ravel().tolist(), v=ent.body.v.ravel().tolist())
        ents[eid] = rec
    return {"name": world.name, "dt": world.dt, "entities": ents}


def _scene_summary(world):
    return {"name": world.name, "dt": world.dt,
            "entities": {eid: world.entities[eid].kind for eid in sorted(world.entities)}}


# -- handlers -----------------------------------------------------------------

def _require_world(session):
    if session.world is None:
        raise _NoScene("no scene loaded in this session")
    return session.world


def _require_env(session):
    if session.env is None:
        raise _NoScene("no task environment made in this session")
    return session.env


def _h_ping(session, payload):
    return dict(payload)


def _h_load_scene(session, payload):
    path = _field(payload, "path", str, required=False)
    data = _field(payload, "data", dict, required=False)
    if (path is None) == (data is None):
        raise _Invalid("exactly one of 'path' or 'data' is required", path="payload")
    if path is not None:
        full = os.path.normpath(os.path.join(session.scene_root, path))
        if not os.path.isfile(full):
            raise _Invalid(f"no scene file at {path!r}", path="payload.path")
        try:
            world = load_scene(full)
        except Exception as exc:
            raise _Invalid(f"scene rejected: {exc}", path="payload.path")
        session._scene_src, session._scene_path = full, full
    else:
        try:
            world = load_scene(data)
        except Exception as exc:
            raise _Invalid(f"scene rejected: {exc}", path="payload.data")
        session._scene_src, session._scene_path = data, None
    session.world = world
    session.env = None
    return _scene_summary(world)


def _h_reset(session, payload):
    if session._scene_src is None:
        raise _NoScene("no scene loaded in this session")
    session.world = load_scene(session._scene_src)
    return _scene_summary(session.world)


def _h_step(session, payload):
    world = _require_world(session)
    n = _field(payload, "n", int, required=False, default=1)
    if n < 1:
        raise _Invalid("n must be >= 1", path="payload.n")
    commands = _field(payload, "commands", dict, required=False)
    try:
        if commands:
            world._apply_commands(commands)
        for _ in range(n):
            world.step()
    except (UnknownEntity, ValueError, ModeMismatch, UnknownMuscleGroup) as exc:
        raise _Invalid(str(exc), path="payload.commands")
    return {"ticks": n}


def _h_get_state(session, payload):
    return world_state(_require_world(session))


def _h_get_sensors(session, payload):
    return _require_world(session).read_sensors()


def _h_set_joint_targets(session, payload):
    world = _require_world(session)
    eid = _field(payload, "entity", str)
    targets = _field(payload, "targets", dict, required=False)
    if targets is None and "ee_target" not in payload:
        raise _Invalid("need 'targets' or 'ee_target'", path="payload")
    if eid not in world.entities:
        raise _Invalid(f"unknown entity {eid!r}", path="payload.entity")
    cmd = {}
    if targets is not None:
        cmd["joint_targets"] = targets
    if "ee_target" in payload:
        # null clears the Cartesian target and leaves the joint setpoints
        cmd["ee_target"] = (None if payload["ee_target"] is None
                            else _vector(payload, "ee_target", 3).tolist())
    try:
        world._apply_commands({eid: cmd})
    except (ValueError, ModeMismatch) as exc:
        raise _Invalid(f"entity {eid!r}: {exc}", path="payload.targets")
    return {"entity": eid}


def _h_set_muscle_activations(session, payload):
    world = _require_world(session)
    eid = _field(payload, "entity", str)
    activations = _field(payload, "activations", dict)
    if eid not in world.entities:
        raise _Invalid(f"unknown entity {eid!r}", path="payload.entity")
    try:
        world._apply_commands({eid: {"activations": activations}})
    except (ModeMismatch, UnknownMuscleGroup, ValueError) as exc:
        raise _Invalid(f"avatar {eid!r}: {exc}", path="payload.activations")
    return {"entity": eid}


def _h_set_physiology(session, payload):
    world = _require_world(session)
    eid = _field(payload, "entity", str)
    fields = _field(payload, "fields", dict)
    ent = world.entities.get(eid)
    if ent is None or ent.kind != "avatar":
        raise _Invalid(f"no avatar entity {eid!r}", path="payload.entity")
    for name, value in sorted(fields.items()):
        try:
            ent.avatar.set_physiology(name, value)
        except (UnknownField, OutOfPlausibleRange, TypeError, ValueError) as exc:
            raise _Invalid(str(exc), path=f"payload.fields.{name}")
    return {"entity": eid, "physiology": ent.avatar.get_physiology()}


def _h_tick_behavior(session, payload):
    tree_doc = _field(payload, "tree", dict, required=False)
    if tree_doc is not None:
        try:
            session._tree = behavior.load_tree(tree_doc, behavior.coach_bindings())
        except (KeyError, ValueError, behavior.UnboundLeaf) as exc:
            raise _Invalid(f"tree rejected: {exc}", path="payload.tree")
        session._tree_ctx = {}
    if session._tree is None:
        session._tree = behavior.build_coach_tree()
        session._tree_ctx = {}
    ctx = session._tree_ctx
    # pose context comes from a scene avatar unless given inline
    eid = _field(payload, "avatar", str, required=False)
    if eid is not None:
        world = _require_world(session)
        ent = world.entities.get(eid)
        if ent is None or ent.kind != "avatar":
            raise _Invalid(f"no avatar entity {eid!r}", path="payload.avatar")
        ctx["model"] = ent.avatar.model
        ctx["pose"] = ent.avatar.pose
    if "pose" in payload:
        if "model" not in ctx:
            raise _Invalid("inline pose needs an 'avatar' for the joint map",
                           path="payload.pose")
        ctx["pose"] = _vector(payload, "pose")
    ctx.pop("events", None)
    try:
        status, trace = behavior.tick_tree(session._tree, ctx)
    except KeyError as exc:
        raise _Invalid(f"tree context missing {exc}", path="payload")
    return {"status": status, "trace": [[name, st] for name, st in trace],
            "events": [[k, d] for k, d in ctx.get("events", [])]}


def _h_env_make(session, payload):
    task = _field(payload, "task", str)
    if task not in TASKS:
        raise _Invalid(f"unknown task {task!r}; have {sorted(TASKS)}", path="payload.task")
    env = make(task)
    session.env = env
    session.world = None
    session._scene_src = None
    lo, hi = env.workspace
    return {"task": task, "obs_size": env.obs_size, "action_size": 3,
            "max_steps": env.max_steps, "control_hz": 20,
            "workspace": [lo.tolist(), hi.tolist()]}


def _h_env_reset(session, payload):
    env = _require_env(session)
    seed = _field(payload, "seed", int, required=False)
    obs = env.reset(seed=seed)
    return {"obs": obs.tolist()}


def _h_env_step(session, payload):
    env = _require_env(session)
    action = _vector(payload, "action", 3)
    try:
        obs, reward, done, info = env.step(action)
    except RuntimeError as exc:
        raise _Invalid(str(exc), path="payload")
    return {"obs": obs.tolist(), "reward": float(reward), "done": bool(done),
            "info": {"success": bool(info["success"]),
                     "force_violations": int(info["force_violations"]),
                     "peak_force": float(info["peak_force"])}}


def _h_shutdown(session, payload):
    session.closed = True
    return {}


_HANDLERS = {
    "Ping": _h_ping,
    "LoadScene": _h_load_scene,
    "Reset": _h_reset,
    "Step": _h_step,
    "GetState": _h_get_state,
    "SetJointTargets": _h_set_joint_targets,
    "SetMuscleActivations": _h_set_muscle_activations,
    "GetSensors": _h_get_sensors,
    "SetPhysiology": _h_set_physiology,
    "TickBehavior": _h_tick_behavior,
    "EnvMake": _h_env_make,
    "EnvReset": _h_env_reset,
    "EnvStep": _h_env_step,
    "Shutdown": _h_shutdown,
}


def dispatch(msg, session):
    """Handle one envelope against a session; always returns a response
    envelope, raising only on programming errors."""
    check_envelope(msg)
    rid, kind, payload = msg["id"], msg["kind"], msg["payload"]
    handler = _HANDLERS.get(kind)
    if handler is None:
        return _err(rid, "UnknownKind", f"unknown kind {kind!r}; have {sorted(_HANDLERS)}")
    try:
        result = handler(session, payload)
    except _NoScene as exc:
        return _err(rid, "SceneNotLoaded", str(exc))
    except _Invalid as exc:
        return _err(rid, "ValidationError", str(exc), path=exc.path)
    if kind == "Ping":
        return {"id": rid, "kind": "Pong", "payload": result}
    return _ok(rid, kind, result)


# -- TCP ----------------------------------------------------------------------

class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session = Session(scene_root=self.server.scene_root)
        while not session.closed:
            try:
                msg = read_frame(self.rfile)
            except ProtocolError as exc:
                self._bail(str(exc))
                return
            if msg is None:
                return
            try:
                response = dispatch(msg, session)
            except ProtocolError as exc:
                self._bail(str(exc))
                return
            write_frame(self.wfile, response)
        # Shutdown stops the whole server once the response is flushed
        threading.Thread(target=self.server.shutdown, daemon=True).start()

    def _bail(self, message):
        try:
            write_frame(self.wfile, {
                "id": 0, "kind": "Error",
                "payload": {"error": "ProtocolError", "message": message},
            })
        except OSError:
            pass


class ProtocolServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def make_server(port=None, scene_root=".", host="127.0.0.1"):
    """Bind the server; caller runs serve_forever(). Port 0 binds an
    OS-assigned port, readable from server.server_address."""
    if port is None:
        port = default_port()
    server = ProtocolServer((host, port), _Handler)
    server.scene_root = scene_root
    return server


def serve(port=None, scene_root=".", host="127.0.0.1"):
    with make_server(port, scene_root, host) as server:
        server.serve_forever()
