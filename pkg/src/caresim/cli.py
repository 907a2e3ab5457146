"""Operator command line.

    caresim bench --mode all --seconds 5
    caresim run scene.json --steps 240 --out traj.jsonl
    caresim env feeding --policy scripted --episodes 20 --out results.json
    caresim serve --port 9500 --scene-root scenes/

Exit codes: 0 success, 2 bad input (unknown scene, task, or flag
values), 3 runtime failure (bind errors, diverged states). stdout
carries one-line human summaries; files carry the data. Shared settings
resolve as flags > CARESIM_* environment variables > --config JSON
file > built-in defaults. Every command is deterministic given
(args, seed) except the wall-clock fields of a bench report: trajectory
and results files are written through the canonical wire serializer, so
identical invocations produce byte-identical files.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .bench import MODES, run_bench
from .dynamics import NonFiniteState
from .server import DEFAULT_PORT, PORT_ENV_VAR, make_server, world_state
from .tasks import CONTROL_HZ, TASKS, make
from .wire import wire_dumps
from .world import MissingAsset, ParseError, load_scene

log = logging.getLogger("caresim")

_ENV_VARS = {
    "seed": "CARESIM_SEED",
    "dt": "CARESIM_DT",
    "log_level": "CARESIM_LOG_LEVEL",
    "port": PORT_ENV_VAR,
}


class InputError(Exception):
    """Bad arguments or unusable input files; exits 2."""


def _setting(args, cfg, name, cast, default):
    """Resolve one shared setting: flag > environment > config > default."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    raw = os.environ.get(_ENV_VARS.get(name, ""), "")
    if raw:
        try:
            return cast(raw)
        except ValueError:
            raise InputError(f"{_ENV_VARS[name]}={raw!r} is not a valid {name}")
    if name in cfg:
        try:
            return cast(cfg[name])
        except (TypeError, ValueError):
            raise InputError(f"config field {name}={cfg[name]!r} is not a valid {name}")
    return default


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"no config file {path!r}")
    except json.JSONDecodeError as e:
        raise InputError(f"config {path}: {e}")
    if not isinstance(cfg, dict):
        raise InputError(f"config {path}: expected a JSON object")
    return cfg


# -- bench -------------------------------------------------------------------


def cmd_bench(mode, seconds):
    """Run the actuation-tier benchmark; returns the reports."""
    modes = MODES if mode == "all" else (mode,)
    reports = []
    for m in modes:
        rep = run_bench(m, seconds)
        print(rep.summary())
        reports.append(rep)
    return reports


# -- run ---------------------------------------------------------------------


def _validate_jsonl(path, head_kind):
    """Re-read an output file and check its line schema before exit."""
    with open(path, "rb") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise RuntimeError(f"{path}: empty output file")
    head = json.loads(lines[0])
    if head.get("kind") != head_kind:
        raise RuntimeError(f"{path}: bad header kind {head.get('kind')!r}")
    for ln in lines[1:]:
        rec = json.loads(ln)
        if "entities" not in rec:
            raise RuntimeError(f"{path}: step record without entities")


def cmd_run(scene, steps, out, seed=0, dt=None, sensors=None):
    """Step a scene and write a JSON-lines trajectory."""
    if steps < 1:
        raise InputError("steps must be >= 1")
    if not os.path.exists(scene):
        raise InputError(f"no scene file {scene!r}")
    world = load_scene(scene)
    if dt is not None:
        if dt <= 0:
            raise InputError("dt must be positive")
        world.dt = dt
    keep = None
    if sensors:
        keep = [s.strip() for s in sensors.split(",") if s.strip()]
        unknown = [s for s in keep if s not in world.entities]
        if unknown:
            raise InputError(f"unknown entities in --sensors: {unknown}")
    header = {"kind": "trajectory", "scene": scene, "steps": steps,
              "dt": world.dt, "seed": seed}
    with open(out, "wb") as fh:
        fh.write(wire_dumps(header) + b"\n")
        for i in range(steps):
            world.step()
            snap = world_state(world)
            if keep is not None:
                snap["entities"] = {k: v for k, v in snap["entities"].items() if k in keep}
            fh.write(wire_dumps(snap) + b"\n")
    _validate_jsonl(out, "trajectory")
    print(f"scene={world.name} steps={steps} dt={world.dt:.6g} -> {out}")
    return 0


# -- env ---------------------------------------------------------------------


def _run_episode(env, policy, ep_seed):
    obs = env.reset(seed=ep_seed)
    rewards = []
    success = False
    while True:
        if policy == "scripted":
            action = env.scripted_action(obs)
        else:
            action = env.random_action()
        obs, reward, done, info = env.step(action)
        rewards.append(float(reward))
        success = success or info["success"]
        if done:
            return rewards, success


def cmd_env(task, policy, episodes, out, csv_path=None, downsample=1, seed=0):
    """Evaluate a policy on a task; write per-episode results and
    optionally a plot-ready force-trace CSV at physics rate."""
    if episodes < 1:
        raise InputError("episodes must be >= 1")
    if downsample < 1:
        raise InputError("downsample must be >= 1")
    env = make(task)
    records, curves, traces = [], [], []
    for ep in range(episodes):
        ep_seed = seed + ep
        rewards, success = _run_episode(env, policy, ep_seed)
        records.append({
            "episode": ep,
            "seed": ep_seed,
            "steps": env.steps,
            "return": float(sum(rewards)),
            "success": bool(success),
            "peak_force_n": float(env.peak_force),
            "force_violations": int(env.force_violations),
        })
        curves.append(rewards)
        traces.append(list(env.force_trace))
        log.debug("episode %d seed %d return %.3f success %s",
                  ep, ep_seed, sum(rewards), success)
    n_success = sum(r["success"] for r in records)
    aggregate = {
        "task": task,
        "policy": policy,
        "episodes": episodes,
        "success_rate": n_success / episodes,
        "mean_return": float(np.mean([r["return"] for r in records])),
        "mean_peak_force_n": float(np.mean([r["peak_force_n"] for r in records])),
        "control_hz": CONTROL_HZ,
        "physics_hz": round(1.0 / env.world.dt),
    }
    results = {"kind": "task-results", "aggregate": aggregate,
               "episodes": records, "reward_curves": curves}
    with open(out, "wb") as fh:
        fh.write(wire_dumps(results) + b"\n")
    with open(out) as fh:
        loaded = json.load(fh)
    for key in ("aggregate", "episodes", "reward_curves"):
        if key not in loaded:
            raise RuntimeError(f"{out}: results file missing {key!r}")

    if csv_path:
        tick_dt = env.world.dt
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "tick", "time_s", "force_n"])
            for ep, trace in enumerate(traces):
                for tick in range(0, len(trace), downsample):
                    writer.writerow([ep, tick, f"{tick * tick_dt:.6f}",
                                     f"{trace[tick]:.6f}"])
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["episode", "tick", "time_s", "force_n"] or len(rows) < 2:
            raise RuntimeError(f"{csv_path}: malformed force-trace CSV")

    print(f"task={task} policy={policy} episodes={episodes} "
          f"success_rate={aggregate['success_rate']:.3f} "
          f"mean_return={aggregate['mean_return']:.2f} -> {out}")
    return 0


# -- serve -------------------------------------------------------------------


def cmd_serve(host, port, scene_root):
    """Bind the TCP protocol server and serve until interrupted."""
    try:
        server = make_server(port=port, scene_root=scene_root, host=host)
    except OSError as e:
        raise RuntimeError(f"cannot bind {host}:{port}: {e}")
    bound = server.server_address[1]
    print(f"listening on {host}:{bound}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# -- wiring ------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="base random seed (default 0)")
    common.add_argument("--dt", type=float, default=None,
                        help="physics step override in seconds")
    common.add_argument("--log-level", default=None,
                        choices=["debug", "info", "warning", "error"])
    common.add_argument("--config", default=None,
                        help="JSON file with default settings")

    parser = argparse.ArgumentParser(
        prog="caresim", description="caregiving simulation operator tool")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("bench", parents=[common],
                       help="actuation-tier speed benchmark")
    p.add_argument("--mode", default="all", choices=MODES + ("all",))
    p.add_argument("--seconds", type=float, default=5.0)

    p = sub.add_parser("run", parents=[common],
                       help="step a scene file and export a trajectory")
    p.add_argument("scene", help="scene JSON path")
    p.add_argument("--steps", type=int, default=240)
    p.add_argument("--out", required=True, help="JSON-lines trajectory path")
    p.add_argument("--sensors", default=None,
                   help="comma-separated entity ids to record (default all)")

    p = sub.add_parser("env", parents=[common],
                       help="evaluate a policy on a care task")
    p.add_argument("task", choices=sorted(TASKS))
    p.add_argument("--policy", default="scripted", choices=["scripted", "random"])
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--out", required=True, help="results JSON path")
    p.add_argument("--csv", default=None, help="force-trace CSV path")
    p.add_argument("--downsample", type=int, default=1,
                   help="keep every Nth physics tick in the CSV")

    p = sub.add_parser("serve", parents=[common],
                       help="run the TCP protocol server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help=f"TCP port; 0 for OS-assigned (default {DEFAULT_PORT})")
    p.add_argument("--scene-root", default=".",
                   help="directory scene paths resolve under")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        seed = _setting(args, cfg, "seed", int, 0)
        dt = _setting(args, cfg, "dt", float, None)
        level = _setting(args, cfg, "log_level", str, "warning")
        logging.basicConfig(level=getattr(logging, level.upper(), logging.WARNING))

        if args.cmd == "bench":
            if args.seconds < 1.0:
                raise InputError("seconds must be >= 1")
            cmd_bench(args.mode, args.seconds)
            return 0
        if args.cmd == "run":
            return cmd_run(args.scene, args.steps, args.out,
                           seed=seed, dt=dt, sensors=args.sensors)
        if args.cmd == "env":
            return cmd_env(args.task, args.policy, args.episodes, args.out,
                           csv_path=args.csv, downsample=args.downsample,
                           seed=seed)
        if args.cmd == "serve":
            port = _setting(args, cfg, "port", int, DEFAULT_PORT)
            return cmd_serve(args.host, port, args.scene_root)
        raise InputError(f"unknown command {args.cmd!r}")
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (MissingAsset, ParseError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (RuntimeError, NonFiniteState, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
