"""Episode metrics computed from a ground-truth trace."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

MIN_DISTANCE_KM = 0.001


@dataclass(frozen=True)
class EpisodeMetrics:
    """Summary of one episode.

    Attributes:
        collisions_per_km: Collision events per kilometer driven (1 m floor).
        route_completed: Reached the route end without collision, stuck or timeout.
        route_completion: Progress along the route in percent.
        duration: Simulated seconds; NaN unless the route was completed.
        smoothness: Mean jerk magnitude in m/s^3.
        min_gap: Smallest longitudinal gap to a lane-overlapping vehicle
            ahead, in meters (``inf`` if there never was one).
        collisions: Number of collision events.
        distance: Meters driven.
        termination: ``completed``, ``collision``, ``stuck``, ``timeout`` or ``planner_failure``.
        mean_total: Mean augmented cost of the executed plans.
    """

    collisions_per_km: float
    route_completed: bool
    route_completion: float
    duration: float
    smoothness: float
    min_gap: float
    collisions: int
    distance: float
    termination: str
    mean_total: float

    def as_row(self) -> dict:
        return asdict(self)


def jerk_smoothness(times: np.ndarray, accel: np.ndarray) -> float:
    """Mean norm of the finite-difference derivative of acceleration."""
    times = np.asarray(times, dtype=float)
    accel = np.asarray(accel, dtype=float)
    if accel.ndim == 1:
        accel = accel[:, None]
    if len(times) < 2:
        return 0.0
    jerk = np.diff(accel, axis=0) / np.diff(times)[:, None]
    return float(np.mean(np.linalg.norm(jerk, axis=1)))


def longitudinal_gaps(ego_s: float, ego_d: float, ego_radius: float, neighbors: Sequence[dict]) -> list[float]:
    """Gaps to vehicles ahead whose footprint overlaps the ego laterally."""
    return [
        nb["s"] - ego_s
        for nb in neighbors
        if nb["s"] >= ego_s and abs(nb["d"] - ego_d) < ego_radius + nb.get("radius", 1.0)
    ]


def compute_metrics(trace: Sequence[dict], route_length: float, ego_radius: float = 1.0) -> EpisodeMetrics:
    """Metrics from per-step records.

    Each record needs ``t``, ``ego`` (``s``, ``d``, ``as``, ``ad``),
    ``neighbors`` and ``collision``; the final record may carry
    ``termination``. Replan records carry ``total``.
    """
    if not trace:
        raise ValueError("trace is empty")
    t = np.array([r["t"] for r in trace], dtype=float)
    s = np.array([r["ego"]["s"] for r in trace], dtype=float)
    acc = np.array([[r["ego"]["as"], r["ego"]["ad"]] for r in trace], dtype=float)
    collisions = int(sum(1 for r in trace if r.get("collision_event")))
    distance = float(s[-1] - s[0])
    km = max(distance / 1000.0, MIN_DISTANCE_KM)
    termination = trace[-1].get("termination") or "timeout"
    completed = termination == "completed"
    progress = 100.0 if completed else float(np.clip(100.0 * distance / route_length, 0.0, 100.0))
    gaps = [g for r in trace for g in longitudinal_gaps(r["ego"]["s"], r["ego"]["d"], ego_radius, r["neighbors"])]
    totals = [r["total"] for r in trace if r.get("total") is not None]
    return EpisodeMetrics(
        collisions_per_km=collisions / km,
        route_completed=completed,
        route_completion=progress,
        duration=float(t[-1] - t[0]) if completed else math.nan,
        smoothness=jerk_smoothness(t, acc),
        min_gap=float(min(gaps)) if gaps else math.inf,
        collisions=collisions,
        distance=distance,
        termination=termination,
        mean_total=float(np.mean(totals)) if totals else math.nan,
    )
