"""Closed-loop 2D driving simulator."""

from .episode import VARIANTS, read_trace, run_episode, write_trace
from .metrics import EpisodeMetrics, compute_metrics
from .perception import emulate_bev_prediction
from .scenario import Scenario, builtin_scenario, load_scenario, resolve_scenario
from .world import WorldState, step_world

__all__ = [
    "VARIANTS",
    "EpisodeMetrics",
    "Scenario",
    "WorldState",
    "builtin_scenario",
    "compute_metrics",
    "emulate_bev_prediction",
    "load_scenario",
    "read_trace",
    "resolve_scenario",
    "run_episode",
    "step_world",
    "write_trace",
]
