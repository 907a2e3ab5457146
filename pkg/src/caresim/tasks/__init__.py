"""Care task environments with a small gym-style interface."""

from .base import CONTROL_HZ, FORCE_LIMIT, TaskEnv, rollout, run_random, run_scripted
from .envs import (
    AmbulatingEnv,
    BathingEnv,
    DressingEnv,
    FeedingEnv,
    LimbRepositioningEnv,
    ToiletingEnv,
)

TASKS = {
    cls.name: cls
    for cls in (FeedingEnv, BathingEnv, DressingEnv, LimbRepositioningEnv,
                AmbulatingEnv, ToiletingEnv)
}


def make(name, seed=None):
    if name not in TASKS:
        raise KeyError(f"unknown task {name!r}; have {sorted(TASKS)}")
    return TASKS[name](seed=seed)
