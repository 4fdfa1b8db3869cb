"""Closed-loop episode: perceive, plan, execute, repeat."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..basis import build_basis
from ..config import PlannerConfig, apply_overrides
from ..occupancy import empty_sentinel, query_distance
from ..optimizer import OptimizerConfig, SceneContext, optimize_with_posterior
from ..projection import build_problem
from ..seeding import EgoState, SamplingDistribution, SeedSolver
from ..uncertainty import ErrorModel
from .metrics import EpisodeMetrics, compute_metrics
from .perception import Perception, emulate_bev_prediction
from .scenario import Scenario
from .world import EgoKinematics, Plan, WorldState, eval_plan, in_collision, neighbor_positions, step_world

logger = logging.getLogger(__name__)

VARIANTS = ("uap", "deterministic", "single-pass")


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def effective_config(
    scenario: Scenario, cfg: PlannerConfig, overrides: dict | None = None
) -> PlannerConfig:
    """``cfg`` with the scenario's planner section, then ``overrides``, applied."""
    if scenario.planner_overrides:
        cfg = apply_overrides(cfg, scenario.planner_overrides)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _ego_record(ego: EgoKinematics) -> dict:
    return {"s": ego.s, "d": ego.d, "vs": ego.vs, "vd": ego.vd, "as": ego.a_s, "ad": ego.a_d}


def _comparable(truth: np.ndarray, predicted: np.ndarray) -> bool:
    """Whether a frame pair is usable for calibration.

    The truth frame must hold an obstacle not cut by the grid border and the
    prediction must not be empty. Selecting on the truth frame keeps the
    choice of frames independent of the injected noise.
    """
    if not truth.any() or not predicted.any():
        return False
    return not (truth[0].any() or truth[-1].any() or truth[:, 0].any() or truth[:, -1].any())


def _frame_distances(perc: Perception, plan: Plan, frame_period: float) -> tuple[list, list]:
    """Predicted and true distance at the plan's position at each frame time.

    Frames that fail :func:`_comparable` carry ``None``: the two distances
    would then measure different things (a sentinel, or a clipped footprint).
    """
    d_pred, d_gt = [], []
    for f, (pf, tf) in enumerate(zip(perc.predicted.fields, perc.truth.fields)):
        if not _comparable(tf.grid.cells, pf.grid.cells):
            d_pred.append(None)
            d_gt.append(None)
            continue
        k = eval_plan(plan, f * frame_period)
        pt = np.array([k.s - plan.s_origin, k.d])
        d_pred.append(float(query_distance(pf, pt).distance))
        d_gt.append(float(query_distance(tf, pt).distance))
    return d_pred, d_gt


def run_episode(
    scenario: Scenario,
    planner_config: PlannerConfig,
    variant: str = "uap",
    seed: int = 0,
    trace_path: str | Path | None = None,
    error_model: ErrorModel | None = None,
    overrides: dict | None = None,
) -> tuple[EpisodeMetrics, list[dict]]:
    """Simulate one episode and return its metrics and per-step trace.

    ``overrides`` are dotted ``KEY=VALUE`` settings that take precedence over
    the scenario's own planner section.

    ``seed`` drives both the perception noise and the planner; the same
    ``(scenario, seed)`` sees identical perception noise for every variant
    until the trajectories diverge.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    cfg = effective_config(scenario, planner_config, overrides)
    emu = cfg.emulation
    basis = build_basis(cfg.basis.segment_count, cfg.basis.steps_per_segment, cfg.basis.dt)
    solver = SeedSolver(basis)
    y_lb, y_ub = scenario.lateral_bounds
    limits = replace(cfg.limits, y_lb=y_lb, y_ub=y_ub)
    opt_cfg: OptimizerConfig = cfg.optimizer
    if variant == "single-pass":
        opt_cfg = replace(opt_cfg, iters=1)
    model = error_model if error_model is not None else ErrorModel.default_synthetic(emu.frames)
    use_barrier = cfg.barrier and scenario.mode == "inlane"
    steps_per_replan = max(int(round(cfg.replan_period / basis.dt)), 1)
    timeout = cfg.timeout if cfg.timeout is not None else 3.0 * scenario.route_length / scenario.cruise_speed + 20.0
    sigma0 = np.diag(np.asarray(cfg.initial_sigma, dtype=float))

    ego = EgoKinematics(scenario.ego_s, scenario.ego_d, scenario.ego_speed, 0.0)
    state = WorldState(0.0, ego, scenario.neighbors, None, cfg.ego_radius)
    trace: list[dict] = []
    dist = SamplingDistribution(np.array([0.0, scenario.cruise_speed]), sigma0)
    stuck_since: float | None = None
    termination: str | None = None
    cycle = 0

    def record(st: WorldState, extra: dict | None = None) -> dict:
        rec = {
            "t": st.t,
            "ego": _ego_record(st.ego),
            "neighbors": neighbor_positions(st.neighbors, st.t),
            "collision": st.collision,
            "collision_event": False,
        }
        if extra:
            rec.update(extra)
        trace.append(rec)
        return rec

    record(state)
    if in_collision(state.ego, cfg.ego_radius, trace[-1]["neighbors"]):
        termination = "collision"
        trace[-1]["collision_event"] = True

    while termination is None:
        t = state.t
        e = state.ego
        perc = emulate_bev_prediction(
            scenario.neighbors, t, e.s, e.d, emu, _stream(scenario.seed, seed, cycle, 0),
            lane_center=0.0, lane_half_width=scenario.lane_half_width,
            track_times=basis.times if use_barrier else None, lead_gate=cfg.lead_gate,
        )
        problem = build_problem(basis, solver.A, np.zeros(solver.A.shape[0]), limits, perc.lead)
        scene = SceneContext(
            basis=basis,
            solver=solver,
            problem=problem,
            ego=EgoState(0.0, e.d, e.vs, e.vd, e.a_s, e.a_d),
            grids=perc.predicted,
            error_model=model,
            kernel=cfg.kernel,
            r_safe=limits.r_safe,
            cruise_speed=scenario.cruise_speed,
            weights=cfg.weights,
            w_bev=cfg.w_bev,
            deterministic=variant == "deterministic",
        )
        planner_seed = int(np.random.SeedSequence([seed, cycle, 1]).generate_state(1)[0])
        try:
            best, _diag, post = optimize_with_posterior(scene, opt_cfg, planner_seed, dist)
        except Exception as exc:  # recorded as an episode outcome
            logger.warning("planner failed at t=%.2f: %s", t, exc)
            trace[-1]["termination"] = "planner_failure"
            trace[-1]["error"] = str(exc)
            termination = "planner_failure"
            break
        if cfg.warm_start:
            dist = SamplingDistribution(post.mu, sigma0)
        plan = Plan(basis, best.xi_projected, e.s, t)
        d_pred, d_gt = _frame_distances(perc, plan, emu.frame_period)
        trace[-1].update(
            {
                "replan": True,
                "p": [best.p.lateral_offset_target, best.p.velocity_setpoint],
                "c_a": best.c_a,
                "c_bev": best.c_bev,
                "residual": best.residual,
                "total": best.total,
                "converged": best.converged,
                "lead": perc.lead_name,
                "d_pred": d_pred,
                "d_gt": d_gt,
                "sentinel": empty_sentinel(perc.truth.grids[0]),
            }
        )
        state = replace(state, plan=plan)
        for _ in range(steps_per_replan):
            state = step_world(state, basis.dt)
            rec = record(state)
            if state.collision:
                rec["collision_event"] = True
                termination = "collision"
            elif state.ego.s >= scenario.route_length:
                termination = "completed"
            else:
                if state.ego.speed < cfg.stuck_speed:
                    stuck_since = state.t if stuck_since is None else stuck_since
                    if state.t - stuck_since > cfg.stuck_time + 1e-9:
                        termination = "stuck"
                else:
                    stuck_since = None
                if termination is None and state.t >= timeout - 1e-9:
                    termination = "timeout"
            if termination is not None:
                rec["termination"] = termination
                break
        cycle += 1

    metrics = compute_metrics(trace, scenario.route_length, cfg.ego_radius)
    if trace_path is not None:
        write_trace(trace, trace_path)
    return metrics, trace


def write_trace(trace: list[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, allow_nan=True) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def observations_from_trace(trace: list[dict]) -> list[tuple[int, float, float]]:
    """``(frame, d_pred, d_gt)`` triples from replan records."""
    out = []
    for rec in trace:
        if not rec.get("replan"):
            continue
        if "d_pred" not in rec or "d_gt" not in rec:
            raise KeyError("trace record lacks d_pred/d_gt columns")
        for k, (dp, dg) in enumerate(zip(rec["d_pred"], rec["d_gt"])):
            if dp is None or dg is None or not (math.isfinite(dp) and math.isfinite(dg)):
                continue
            out.append((k, dp, dg))
    return out
