"""Sampling-based trajectory optimizer over behavioral inputs.

Each iteration draws behaviors from a Gaussian, turns them into seed
trajectories, projects the seeds onto the constraint set, keeps the
candidates with the smallest constraint residual, scores those with the
analytic cost plus the uncertainty-aware collision cost, and refits the
Gaussian to the best few with exponentiated-cost weights.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .basis import BasisSet, eval_batch
from .occupancy import GridSequence, batch_distances
from .projection import ProjectionProblem, project_batch, residual_norm
from .seeding import (
    BehavioralInput,
    CostWeights,
    EgoState,
    SamplingDistribution,
    SeedSolver,
    analytic_cost_batch,
    boundary_vectors,
    draw_behaviors,
)
from .uncertainty import ErrorModel, KernelConfig, collision_cost_samples, mmd_cost, sample_noisy_distances

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """Sampling and update parameters.

    Attributes:
        n_bar_s: Behaviors drawn per iteration.
        n_s: Candidates kept by smallest constraint residual.
        n_e: Elites kept by smallest total cost.
        iters: Outer iterations.
        beta: Temperature of the exponentiated-cost weights.
        eta: Learning rate of the mean and covariance update.
        cov_floor: Added to the covariance diagonal after every update.
        proj_iters: Iteration cap for the projection.
        proj_tol: Projection stopping tolerance.
        return_all_time_best: Return the best candidate over all iterations
            instead of the final iteration's best elite.
    """

    n_bar_s: int = 100
    n_s: int = 30
    n_e: int = 10
    iters: int = 8
    beta: float = 0.9
    eta: float = 0.6
    cov_floor: float = 1e-4
    proj_iters: int = 75
    proj_tol: float = 1e-3
    return_all_time_best: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.n_e <= self.n_s <= self.n_bar_s:
            raise ValueError(f"need 1 <= n_e <= n_s <= n_bar_s, got {self.n_e}, {self.n_s}, {self.n_bar_s}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")


@dataclass(frozen=True, eq=False)
class SceneContext:
    """Everything one planning cycle needs besides the sampling distribution.

    Trajectories are planned in a road-aligned frame with the ego at
    longitudinal coordinate 0; ``grids`` must be expressed in that frame.
    With ``deterministic`` set, the collision cost uses the predicted
    distances as exact (a single noise-free sample).
    """

    basis: BasisSet
    solver: SeedSolver
    problem: ProjectionProblem
    ego: EgoState
    grids: GridSequence | None = None
    error_model: ErrorModel = field(default_factory=ErrorModel.default_synthetic)
    kernel: KernelConfig = KernelConfig()
    r_safe: float = 3.0
    cruise_speed: float | None = None
    weights: CostWeights = CostWeights()
    w_bev: float = 1.0
    deterministic: bool = False


@dataclass
class CandidateRecord:
    index: int
    p: BehavioralInput
    xi_seed: np.ndarray
    xi_projected: np.ndarray
    residual: float
    converged: bool
    c_a: float = float("nan")
    c_bev: float = float("nan")

    @property
    def total(self) -> float:
        return self.c_a + self.c_bev + self.residual


@dataclass
class IterationResult:
    dist: SamplingDistribution
    candidates: list[CandidateRecord]
    constraint_elites: np.ndarray
    elites: np.ndarray
    best: CandidateRecord


def _stream(seed, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; same inputs give the same stream."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    return np.random.default_rng(np.random.SeedSequence(0 if seed is None else seed, spawn_key=key))


def _smallest(values: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` smallest values, ties by ascending index."""
    return np.argsort(values, kind="stable")[:count]


def collision_costs(
    scene: SceneContext, xi: np.ndarray, rng_seed, iteration: int, indices: np.ndarray
) -> np.ndarray:
    """Collision cost per coefficient row; each row gets its own noise stream."""
    if scene.grids is None:
        return np.zeros(xi.shape[0])
    basis = scene.basis
    x, y = eval_batch(basis, xi)[:2]
    d = batch_distances(scene.grids, x, y, basis.dt)
    if scene.deterministic:
        f = collision_cost_samples(d[:, None, :], scene.r_safe)
    else:
        steps = scene.grids.frame_index(basis.times)
        m = scene.kernel.sample_count
        noisy = np.stack(
            [
                sample_noisy_distances(d[i], scene.error_model, m, _stream(rng_seed, iteration, int(j)), steps)
                for i, j in enumerate(indices)
            ]
        )
        f = collision_cost_samples(noisy, scene.r_safe)
    return scene.w_bev * np.asarray(mmd_cost(f, scene.kernel))


def analytic_costs(scene: SceneContext, xi: np.ndarray, behaviors: np.ndarray) -> np.ndarray:
    _, y, vx, vy, ax, ay = eval_batch(scene.basis, xi)
    v_ref = behaviors[:, 1] if scene.cruise_speed is None else scene.cruise_speed
    return analytic_cost_batch(y, vx, vy, ax, ay, v_ref, scene.weights)


def update_distribution(
    dist: SamplingDistribution,
    elites: list[tuple[BehavioralInput | np.ndarray, float]],
    beta: float,
    eta: float,
    cov_floor: float = 1e-4,
) -> SamplingDistribution:
    """Exponentiated-cost weighted refit of the mean and covariance.

    Weights are ``exp(-(total - min_total) / beta)``. Subtracting the minimum
    does not change any weight ratio, so the update is the same as with raw
    ``exp(-total / beta)`` but cannot underflow to all zeros.
    """
    if not elites:
        raise ValueError("update needs at least one elite")
    P = np.array([e[0].as_array() if isinstance(e[0], BehavioralInput) else np.asarray(e[0], float) for e in elites])
    totals = np.array([float(e[1]) for e in elites])
    if not np.all(np.isfinite(totals)):
        raise ValueError("elite totals must be finite")
    w = np.exp(-(totals - totals.min()) / beta)
    wsum = w.sum()
    if not wsum > 0:
        raise ValueError("all elite weights underflowed to zero")
    mu_new = (1 - eta) * dist.mu + eta * (w @ P) / wsum
    dev = P - mu_new
    cov = (dev * w[:, None]).T @ dev / wsum
    sigma_new = (1 - eta) * dist.sigma + eta * cov
    sigma_new = 0.5 * (sigma_new + sigma_new.T) + cov_floor * np.eye(mu_new.size)
    return SamplingDistribution(mu_new, sigma_new)


def iterate(
    dist: SamplingDistribution,
    scene: SceneContext,
    config: OptimizerConfig,
    rng_seed,
    iteration: int = 0,
) -> IterationResult:
    behaviors = draw_behaviors(dist, config.n_bar_s, _stream(rng_seed, iteration))
    # a speed setpoint outside the limits is unreachable; a negative one
    # would also let the speed-tracking term reward reversing at cruise speed
    lim = scene.problem.limits
    behaviors[:, 1] = np.clip(behaviors[:, 1], lim.v_min, lim.v_max)
    B = boundary_vectors(scene.basis, scene.ego, behaviors)
    seeds = scene.solver.solve(B)
    proj = project_batch(seeds, scene.problem, B, config.proj_iters, config.proj_tol)
    res = np.asarray(residual_norm(proj.xi, scene.problem))
    candidates = [
        CandidateRecord(j, BehavioralInput(*behaviors[j]), seeds[j], proj.xi[j], float(res[j]), bool(proj.converged[j]))
        for j in range(config.n_bar_s)
    ]
    ce = _smallest(res, config.n_s)
    c_a = analytic_costs(scene, proj.xi[ce], behaviors[ce])
    c_bev = collision_costs(scene, proj.xi[ce], rng_seed, iteration, ce)
    for k, j in enumerate(ce):
        candidates[j].c_a = float(c_a[k])
        candidates[j].c_bev = float(c_bev[k])
    totals = np.array([candidates[j].total for j in ce])
    finite = np.isfinite(totals)
    if finite.sum() < config.n_e:
        raise ValueError(f"only {finite.sum()} candidates have a finite cost, need {config.n_e}")
    order = _smallest(np.where(finite, totals, np.inf), config.n_e)
    elites = ce[order]
    new_dist = update_distribution(
        dist, [(behaviors[j], candidates[j].total) for j in elites], config.beta, config.eta, config.cov_floor
    )
    new_dist.check_psd()
    return IterationResult(new_dist, candidates, ce, elites, candidates[elites[0]])


def optimize(
    scene: SceneContext,
    config: OptimizerConfig,
    rng_seed,
    dist: SamplingDistribution | None = None,
    diagnostics_path: str | Path | None = None,
    on_iteration: Callable[[int, IterationResult], None] | None = None,
) -> tuple[CandidateRecord, list[dict]]:
    """Run ``config.iters`` iterations and return the chosen candidate.

    The starting distribution defaults to zero lateral offset at the cruise
    speed (or the ego's current speed) with unit variance.
    """
    if dist is None:
        v0 = scene.cruise_speed if scene.cruise_speed is not None else float(np.hypot(scene.ego.vx, scene.ego.vy))
        dist = SamplingDistribution(np.array([0.0, v0]), np.eye(2))
    diagnostics: list[dict] = []
    best_ever: CandidateRecord | None = None
    result: IterationResult | None = None
    for it in range(config.iters):
        result = iterate(dist, scene, config, rng_seed, it)
        elite_totals = np.array([result.candidates[j].total for j in result.elites])
        residuals = np.array([c.residual for c in result.candidates])
        diagnostics.append(
            {
                "iteration": it,
                "best_total": float(result.best.total),
                "mean_total": float(elite_totals.mean()),
                "covariance_trace": float(np.trace(result.dist.sigma)),
                "mu": result.dist.mu.tolist(),
                "residual_quantiles": np.quantile(residuals, [0.0, 0.25, 0.5, 0.75, 1.0]).tolist(),
                "converged_fraction": float(np.mean([c.converged for c in result.candidates])),
            }
        )
        if best_ever is None or result.best.total < best_ever.total:
            best_ever = result.best
        if on_iteration is not None:
            on_iteration(it, result)
        dist = result.dist
    if diagnostics_path is not None:
        with open(diagnostics_path, "w") as fh:
            for rec in diagnostics:
                fh.write(json.dumps(rec) + "\n")
    assert result is not None and best_ever is not None
    chosen = best_ever if config.return_all_time_best else result.best
    return chosen, diagnostics


def optimize_with_posterior(
    scene: SceneContext, config: OptimizerConfig, rng_seed, dist: SamplingDistribution
) -> tuple[CandidateRecord, list[dict], SamplingDistribution]:
    """:func:`optimize` that also returns the final sampling distribution."""
    holder: dict = {}

    def keep(_it: int, res: IterationResult) -> None:
        holder["dist"] = res.dist

    best, diag = optimize(scene, config, rng_seed, dist, on_iteration=keep)
    return best, diag, holder["dist"]


def with_iters(config: OptimizerConfig, iters: int) -> OptimizerConfig:
    return replace(config, iters=iters)
