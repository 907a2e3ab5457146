"""caresim: headless physics simulation for robotic caregiving.

A numpy library that models care recipients as clinically parametrized
avatars (skeleton, Hill-type muscles, XPBD soft tissue), steps them in
deterministic scenes together with assistive robots, scores six benchmark
caregiving tasks, and exposes everything over a small TCP protocol.
"""

__version__ = "0.1.0"

from . import mathcore  # noqa: F401
