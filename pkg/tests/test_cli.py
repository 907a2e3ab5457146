"""Command-line tests: exit codes, determinism, output schemas.

Oracles: the trajectory's final state is checked against stepping the
same scene in-process (same-engine identity, so equality is exact);
byte-identity of reruns follows from the canonical serializer; exit
codes are the documented 0/2/3 contract.
"""

import json
import os
import socket
import subprocess
import sys

import numpy as np
import pytest

from caresim.cli import main
from caresim.world import load_scene

SCENE = os.path.join(os.path.dirname(__file__), "..", "src", "caresim",
                     "assets", "scenes", "falling_sphere.json")


class TestRun:
    def test_trajectory_matches_in_process_stepping(self, tmp_path):
        out = tmp_path / "traj.jsonl"
        assert main(["run", SCENE, "--steps", "240", "--out", str(out)]) == 0
        world = load_scene(SCENE)
        for _ in range(240):
            world.step()
        want = world.entity("ball").pos[1]
        last = json.loads(out.read_bytes().splitlines()[-1])
        assert last["entities"]["ball"]["pos"][1] == pytest.approx(want, abs=1e-9)

    def test_fall_distance_near_kinematics(self, tmp_path):
        # 1 s of free fall: 0.5 g t^2 = 4.905 m within the integrator bias
        out = tmp_path / "traj.jsonl"
        main(["run", SCENE, "--steps", "240", "--out", str(out)])
        last = json.loads(out.read_bytes().splitlines()[-1])
        drop = 6.0 - last["entities"]["ball"]["pos"][1]
        assert drop == pytest.approx(4.905, rel=0.01)

    def test_reruns_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        main(["run", SCENE, "--steps", "60", "--out", str(a)])
        main(["run", SCENE, "--steps", "60", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_missing_scene_names_path(self, tmp_path, capsys):
        rc = main(["run", "nowhere/void.json", "--steps", "5",
                   "--out", str(tmp_path / "x.jsonl")])
        assert rc == 2
        assert "nowhere/void.json" in capsys.readouterr().err

    def test_sensor_selection(self, tmp_path):
        out = tmp_path / "traj.jsonl"
        assert main(["run", SCENE, "--steps", "5", "--out", str(out),
                     "--sensors", "ball"]) == 0
        rec = json.loads(out.read_bytes().splitlines()[1])
        assert list(rec["entities"]) == ["ball"]

    def test_unknown_sensor_rejected(self, tmp_path):
        rc = main(["run", SCENE, "--steps", "5",
                   "--out", str(tmp_path / "x.jsonl"), "--sensors", "ghost"])
        assert rc == 2

    def test_zero_steps_rejected(self, tmp_path):
        rc = main(["run", SCENE, "--steps", "0", "--out", str(tmp_path / "x.jsonl")])
        assert rc == 2


class TestEnv:
    def test_results_schema_and_csv(self, tmp_path):
        out, traces = tmp_path / "res.json", tmp_path / "forces.csv"
        rc = main(["env", "feeding", "--policy", "scripted", "--episodes", "1",
                   "--seed", "11", "--out", str(out), "--csv", str(traces),
                   "--downsample", "3"])
        assert rc == 0
        res = json.loads(out.read_text())
        agg = res["aggregate"]
        assert agg["task"] == "feeding" and agg["episodes"] == 1
        assert 0.0 <= agg["success_rate"] <= 1.0
        ep = res["episodes"][0]
        assert ep["seed"] == 11
        assert len(res["reward_curves"][0]) == ep["steps"]
        rows = traces.read_text().splitlines()
        assert rows[0] == "episode,tick,time_s,force_n"
        # downsample 3 keeps ticks 0, 3, 6, ...
        assert rows[1].startswith("0,0,") and rows[2].startswith("0,3,")

    def test_results_byte_identical_across_reruns(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["env", "toileting", "--episodes", "1", "--seed", "3", "--out", str(a)])
        main(["env", "toileting", "--episodes", "1", "--seed", "3", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_zero_episodes_rejected(self, tmp_path):
        rc = main(["env", "feeding", "--episodes", "0", "--out", str(tmp_path / "x.json")])
        assert rc == 2

    def test_unknown_task_rejected(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["env", "juggling", "--episodes", "1", "--out", str(tmp_path / "x.json")])
        assert err.value.code == 2


class TestBench:
    def test_sub_second_budget_rejected(self):
        assert main(["bench", "--mode", "skeletal", "--seconds", "0.2"]) == 2

    def test_unknown_mode_rejected(self):
        with pytest.raises(SystemExit) as err:
            main(["bench", "--mode", "warp"])
        assert err.value.code == 2


class TestServe:
    def test_occupied_port_exits_3(self):
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            r = subprocess.run(
                [sys.executable, "-m", "caresim.cli", "serve", "--port", str(port)],
                capture_output=True, text=True, timeout=30)
            assert r.returncode == 3
            assert "bind" in r.stderr
        finally:
            blocker.close()

    def test_port_zero_prints_assigned_port(self):
        proc = subprocess.Popen(
            [sys.executable, "-m", "caresim.cli", "serve", "--port", "0"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        try:
            line = proc.stdout.readline().strip()
            port = int(line.rsplit(":", 1)[1])
            assert port > 0
            with socket.create_connection(("127.0.0.1", port), timeout=5):
                pass
        finally:
            proc.terminate()
            proc.wait(timeout=10)


class TestSettings:
    def test_env_var_feeds_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CARESIM_SEED", "5")
        out = tmp_path / "t.jsonl"
        main(["run", SCENE, "--steps", "2", "--out", str(out)])
        head = json.loads(out.read_bytes().splitlines()[0])
        assert head["seed"] == 5

    def test_flag_beats_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CARESIM_SEED", "5")
        out = tmp_path / "t.jsonl"
        main(["run", SCENE, "--steps", "2", "--out", str(out), "--seed", "7"])
        head = json.loads(out.read_bytes().splitlines()[0])
        assert head["seed"] == 7

    def test_env_var_beats_config_file(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"seed": 9}')
        monkeypatch.setenv("CARESIM_SEED", "5")
        out = tmp_path / "t.jsonl"
        main(["run", SCENE, "--steps", "2", "--out", str(out), "--config", str(cfg)])
        head = json.loads(out.read_bytes().splitlines()[0])
        assert head["seed"] == 5

    def test_config_file_feeds_seed(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"seed": 9}')
        out = tmp_path / "t.jsonl"
        main(["run", SCENE, "--steps", "2", "--out", str(out), "--config", str(cfg)])
        head = json.loads(out.read_bytes().splitlines()[0])
        assert head["seed"] == 9

    def test_missing_config_rejected(self, tmp_path):
        rc = main(["run", SCENE, "--steps", "2",
                   "--out", str(tmp_path / "t.jsonl"), "--config", "void.json"])
        assert rc == 2
