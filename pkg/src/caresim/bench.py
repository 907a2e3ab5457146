"""Actuation-tier speed benchmark.

One avatar in an empty world, neck pitch tracking a sinusoid, stepped
for a wall-clock budget. Three tiers of the same scene, all driven
through the same joint-target command so the tiers differ only in how
much machinery a step runs:

- skeletal: articulated body alone, no muscle elements. Gravity
  compensation is off so the gravitational and velocity bias terms are
  evaluated numerically every step along with the mass matrix; this is
  the full joint-space dynamics bill, not a kinematic pose playback.
- musculoskeletal: same dynamics plus the Hill-muscle pass (path
  lengths, tensions, joint torques) every step.
- soft-tissue: the skeletal tier plus an attached tissue sleeve around
  the neck, stepped by the compliant-constraint solver against the
  body capsules.

Absolute FPS is hardware; the meaningful result is the ordering
skeletal >= musculoskeletal >= soft-tissue and the bounded overhead of
the muscle pass over the skeletal baseline.
"""

import time
from dataclasses import dataclass

import numpy as np

from .avatar import Avatar, load_builtin
from .softbody import attach_to_skeleton, make_capsule_shell, update_attachments
from .world import AvatarEntity, SoftEntity, World

MODES = ("skeletal", "musculoskeletal", "soft-tissue")

# neck swing: +-0.4 rad at 0.5 Hz
_AMP = 0.4
_HZ = 0.5


@dataclass
class BenchReport:
    mode: str
    seconds: float
    steps: int

    @property
    def fps(self):
        return self.steps / self.seconds if self.seconds > 0 else 0.0

    def summary(self):
        return (f"mode={self.mode} steps={self.steps} "
                f"wall={self.seconds:.2f}s fps={self.fps:.0f}")


def _build(mode, dt, profile="morgan"):
    world = World(dt=dt, name=f"bench-{mode}")
    actuation = "musculoskeletal" if mode == "musculoskeletal" else "skeletal"
    # uncompensated bias sags a soft PD; a stiffer tracking frequency keeps
    # the swing visible without changing the per-step flop count
    avatar = Avatar(load_builtin(profile), mode="active", actuation=actuation,
                    gravity_comp=False, pd_omega=60.0)
    world.add(AvatarEntity("patient", avatar, animate=True))
    if mode == "soft-tissue":
        # tissue sleeve around the neck, bottom ring bound to the spine
        shell = make_capsule_shell(radius=0.09, length=0.22, rings=8,
                                   segs=12, mass=0.8)
        tfs = avatar.fk()
        neck = tfs[avatar.model.joint_id("neck")].pos
        shell.x += neck + np.array([0.0, -0.05, 0.0])
        attach_to_skeleton(shell, avatar.model, tfs,
                           list(range(12)), "spine3")
        attach_to_skeleton(shell, avatar.model, tfs,
                           list(range(84, 96)), "head")
        world.add(SoftEntity("tissue", shell, substeps=2, iterations=15))
    return world, avatar


def _drive(world, avatar, mode, t):
    pitch = _AMP * np.sin(2.0 * np.pi * _HZ * t)
    world._apply_commands({"patient": {"joint_targets": {"neck": [pitch, 0.0, 0.0]}}})
    if mode == "soft-tissue":
        update_attachments(world.entity("tissue").body, avatar.fk())


def run_bench(mode, seconds, dt=1.0 / 240.0, profile="morgan"):
    """Step the scene for the wall budget; returns a BenchReport."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if seconds < 1.0:
        raise ValueError("seconds must be >= 1")
    world, avatar = _build(mode, dt, profile)
    steps = 0
    start = time.perf_counter()
    deadline = start + seconds
    while time.perf_counter() < deadline:
        _drive(world, avatar, mode, world.time)
        world.step()
        steps += 1
    return BenchReport(mode=mode, seconds=time.perf_counter() - start, steps=steps)
