"""Benchmark scene tests: construction per tier, report arithmetic, guards.

The speed orderings themselves run in the acceptance suite with the
full wall budget; here we only check that each tier builds the scene it
claims and that the report math is exact.
"""

import pytest

from caresim.bench import MODES, BenchReport, _build, run_bench


class TestReport:
    def test_fps_is_steps_over_seconds(self):
        rep = BenchReport(mode="skeletal", seconds=2.0, steps=500)
        assert rep.fps == 250.0

    def test_summary_names_the_mode(self):
        rep = BenchReport(mode="soft-tissue", seconds=1.0, steps=30)
        assert "soft-tissue" in rep.summary()
        assert "fps=30" in rep.summary()


class TestBuild:
    def test_three_modes(self):
        assert MODES == ("skeletal", "musculoskeletal", "soft-tissue")

    def test_tiers_differ_only_in_machinery(self):
        for mode in MODES:
            world, avatar = _build(mode, 1.0 / 240.0)
            assert avatar.mode == "active"
            want = "musculoskeletal" if mode == "musculoskeletal" else "skeletal"
            assert avatar.actuation == want
            assert (len(avatar.muscles) > 0) == (mode == "musculoskeletal")
            has_tissue = any(e.kind == "soft" for e in world.entities.values())
            assert has_tissue == (mode == "soft-tissue")

    def test_guards(self):
        with pytest.raises(ValueError):
            run_bench("cartoon", 5.0)
        with pytest.raises(ValueError):
            run_bench("skeletal", 0.5)

    def test_short_run_reports_steps(self):
        rep = run_bench("skeletal", 1.0)
        assert rep.steps > 0
        assert rep.fps > 0
        assert rep.seconds >= 1.0
