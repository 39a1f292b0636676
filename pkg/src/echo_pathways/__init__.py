"""Opinion dynamics on a rewiring follower network.

Agents hold scalar opinions, read posts from followees and from a pluggable
recommender, move toward concordant content, swap discordant followees for
concordant recommended authors, and repost. The package bundles the
simulator, the measurement stack (homophily, polarization, pathway, force
landscape), a parameter-sweep harness, a CLI, and a live session service.
"""

from .config import ConfigError, ScenarioConfig
from .core import (
    InterventionEvent,
    RewireEvent,
    RunRecord,
    Simulation,
    StepRecord,
    run,
)
from .graph import FollowGraph, build_initial_network
from .posts import Post, StepPosts

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "InterventionEvent",
    "RewireEvent",
    "RunRecord",
    "Simulation",
    "StepRecord",
    "run",
    "FollowGraph",
    "build_initial_network",
    "Post",
    "StepPosts",
]

__version__ = "0.1.0"
