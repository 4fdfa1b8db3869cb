"""World state and stepping with perfect trajectory tracking."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..basis import BasisSet
from .scenario import NeighborScript


@dataclass(frozen=True)
class EgoKinematics:
    """Ego state in road coordinates."""

    s: float
    d: float
    vs: float
    vd: float
    a_s: float = 0.0
    a_d: float = 0.0

    @property
    def speed(self) -> float:
        return float(np.hypot(self.vs, self.vd))


@dataclass(frozen=True, eq=False)
class Plan:
    """Coefficients in the planning frame of the cycle that produced them.

    The planning frame has its longitudinal origin at ``s_origin`` and time
    origin at ``t_origin``.
    """

    basis: BasisSet
    xi: np.ndarray
    s_origin: float
    t_origin: float


@dataclass(frozen=True, eq=False)
class WorldState:
    t: float
    ego: EgoKinematics
    neighbors: tuple[NeighborScript, ...]
    plan: Plan | None = None
    ego_radius: float = 1.0
    collision: bool = False


def eval_plan(plan: Plan, tau: float) -> EgoKinematics:
    """Exact polynomial state at local time ``tau``; constant velocity past the horizon."""
    basis = plan.basis
    horizon = basis.segment_count * basis.segment_duration
    nv = basis.nvar
    cx, cy = plan.xi[:nv], plan.xi[nv:]
    overshoot = max(tau - horizon, 0.0)
    tau_c = min(max(tau, 0.0), horizon)
    j = min(int(tau_c // basis.segment_duration), basis.segment_count - 1)
    u = tau_c - j * basis.segment_duration
    p = np.array([1.0, u, u * u, u**3])
    v = np.array([0.0, 1.0, 2 * u, 3 * u * u])
    a = np.array([0.0, 0.0, 2.0, 6 * u])
    sl = slice(4 * j, 4 * j + 4)
    x, y = p @ cx[sl], p @ cy[sl]
    vx, vy = v @ cx[sl], v @ cy[sl]
    ax, ay = a @ cx[sl], a @ cy[sl]
    if overshoot > 0:
        return EgoKinematics(plan.s_origin + x + vx * overshoot, y + vy * overshoot, vx, vy, 0.0, 0.0)
    return EgoKinematics(plan.s_origin + x, y, vx, vy, ax, ay)


def neighbor_positions(neighbors: tuple[NeighborScript, ...], t: float) -> list[dict]:
    return [{"name": nb.name, "s": float(nb.s(t)), "d": float(nb.d(t)), "radius": nb.radius} for nb in neighbors]


def in_collision(ego: EgoKinematics, ego_radius: float, neighbors: list[dict]) -> bool:
    """Ground-truth check: center distance below the sum of radii."""
    return any(np.hypot(nb["s"] - ego.s, nb["d"] - ego.d) < ego_radius + nb["radius"] for nb in neighbors)


def step_world(state: WorldState, dt: float) -> WorldState:
    """Advance time by ``dt``: neighbors follow their scripts, the ego follows its plan."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    t = state.t + dt
    if state.plan is None:
        e = state.ego
        ego = EgoKinematics(e.s + e.vs * dt, e.d + e.vd * dt, e.vs, e.vd, 0.0, 0.0)
    else:
        ego = eval_plan(state.plan, t - state.plan.t_origin)
    nbs = neighbor_positions(state.neighbors, t)
    return replace(state, t=t, ego=ego, collision=in_collision(ego, state.ego_radius, nbs))
