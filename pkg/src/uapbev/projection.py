"""Batch projection of seed trajectories onto the feasible set.

Speed and acceleration norm bounds are handled in polar form (angle plus a
box-bounded magnitude per step); lane keeping and distance keeping are
discrete-time barrier rows ``G @ xi <= b_barrier`` with a non-negative slack.
Both are relaxed into an augmented Lagrangian and minimized by alternating
closed-form updates, with the boundary equalities ``A @ xi = b`` enforced
exactly by every coefficient update.

All per-candidate state is laid out as ``(batch, dim)`` arrays so a whole
batch runs as one pipeline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisSet

logger = logging.getLogger(__name__)


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerLimits:
    v_min: float = 0.0
    v_max: float = 10.0
    a_max: float = 5.0
    y_lb: float = -1.75
    y_ub: float = 1.75
    gamma_lane: float = 0.9
    gamma_long: float = 0.9
    s_min: float = 4.0
    r_safe: float = 3.0
    rho: float = 1.0

    def __post_init__(self) -> None:
        if self.v_min > self.v_max:
            raise ValueError(f"v_min ({self.v_min}) > v_max ({self.v_max})")
        if not self.a_max > 0:
            raise ValueError(f"a_max must be positive, got {self.a_max}")
        if not self.y_lb < self.y_ub:
            raise ValueError(f"y_lb ({self.y_lb}) must be below y_ub ({self.y_ub})")
        for name in ("gamma_lane", "gamma_long"):
            g = getattr(self, name)
            if not 0 < g <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {g}")
        if not self.rho >= 0:
            raise ValueError(f"rho must be non-negative, got {self.rho}")


@dataclass(frozen=True)
class LeadVehicleTrack:
    """Predicted longitudinal positions of the lead vehicle, one per planner step."""

    x_o: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_o", np.asarray(self.x_o, dtype=float).reshape(-1))


@dataclass(frozen=True, eq=False)
class ProjectionProblem:
    """Assembled matrices for one planning cycle.

    ``Ftilde`` stacks ``[W1; W2]`` on each axis block, so the polar target is
    ordered ``(dv cos av, da cos aa, dv sin av, da sin aa)``. ``G`` rows are
    upper lane, lower lane, then (optionally) longitudinal.
    """

    basis: BasisSet
    A: np.ndarray
    b: np.ndarray
    Ftilde: np.ndarray
    G: np.ndarray
    b_barrier: np.ndarray
    d_min: np.ndarray
    d_max: np.ndarray
    rho: float
    limits: PlannerLimits
    has_lead: bool
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def F(self) -> np.ndarray:
        if "F" not in self._cache:
            self._cache["F"] = np.vstack([self.Ftilde, self.G])
        return self._cache["F"]

    @property
    def nvar(self) -> int:
        return self.A.shape[1]

    def kkt_inverse(self) -> np.ndarray:
        """Inverse of ``[[I + rho F^T F, A^T], [A, 0]]``, computed once."""
        if "kkt_inv" not in self._cache:
            F = self.F
            nx = self.nvar
            m = self.A.shape[0]
            K = np.block(
                [[np.eye(nx) + self.rho * F.T @ F, self.A.T], [self.A, np.zeros((m, m))]]
            )
            cond = np.linalg.cond(K)
            if not np.isfinite(cond) or cond > 1e14:
                raise ProjectionError(f"KKT matrix is singular (condition number {cond:.3e})")
            self._cache["kkt_inv"] = np.linalg.inv(K)
        return self._cache["kkt_inv"]

    def with_b(self, b: np.ndarray) -> ProjectionProblem:
        """Same matrices, new equality target; shares the factorization cache."""
        return replace(self, b=np.asarray(b, dtype=float), _cache=self._cache)


@dataclass
class ProjectionState:
    """AM iterates for a batch. Every array is ``(batch, dim)``."""

    xi: np.ndarray
    alpha: np.ndarray
    d: np.ndarray
    lam: np.ndarray
    s: np.ndarray
    e: np.ndarray

    def constraint_values(self, problem: ProjectionProblem) -> np.ndarray:
        """``F xi``: derivative pairs followed by barrier rows."""
        return np.atleast_2d(self.xi) @ problem.F.T


@dataclass
class ProjectionResult:
    xi: np.ndarray
    residual_history: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray

    def __iter__(self):
        yield self.xi
        yield self.residual_history


def barrier_rows(basis: BasisSet, gamma: float) -> np.ndarray:
    """``W[1:n] + (gamma - 1) W[0:n-1]``: one row per step pair."""
    return basis.W[1:] + (gamma - 1.0) * basis.W[:-1]


def build_problem(
    basis: BasisSet,
    A: np.ndarray,
    b: np.ndarray,
    limits: PlannerLimits,
    lead: LeadVehicleTrack | None = None,
) -> ProjectionProblem:
    nv = basis.nvar
    n = basis.n
    Z = np.zeros((2 * n, nv))
    blk = np.vstack([basis.W1, basis.W2])
    Ftilde = np.block([[blk, Z], [Z, blk]])

    lane = barrier_rows(basis, limits.gamma_lane)
    zl = np.zeros_like(lane)
    G_ub = np.hstack([zl, lane])
    G_lb = np.hstack([zl, -lane])
    b_ub = np.full(n - 1, limits.gamma_lane * limits.y_ub)
    b_lb = np.full(n - 1, -limits.gamma_lane * limits.y_lb)
    G_blocks = [G_ub, G_lb]
    b_blocks = [b_ub, b_lb]
    if lead is not None:
        x_o = lead.x_o
        if x_o.size not in (n, n + 1):
            raise ValueError(f"lead track has {x_o.size} entries, expected {n} or {n + 1}")
        x_o = x_o[:n]
        g = limits.gamma_long
        G_blocks.append(np.hstack([barrier_rows(basis, g), np.zeros((n - 1, nv))]))
        b_blocks.append(x_o[1:] + (g - 1.0) * x_o[:-1] - g * limits.s_min)
    G = np.vstack(G_blocks)
    b_barrier = np.concatenate(b_blocks)

    d_min = np.concatenate([np.full(n, limits.v_min), np.zeros(n)])
    d_max = np.concatenate([np.full(n, limits.v_max), np.full(n, limits.a_max)])
    A = np.asarray(A, dtype=float)
    if A.shape[1] != 2 * nv:
        raise ValueError(f"A has {A.shape[1]} columns, basis needs {2 * nv}")
    return ProjectionProblem(
        basis=basis,
        A=A,
        b=np.asarray(b, dtype=float),
        Ftilde=Ftilde,
        G=G,
        b_barrier=b_barrier,
        d_min=d_min,
        d_max=d_max,
        rho=float(limits.rho),
        limits=limits,
        has_lead=lead is not None,
    )


def _derivatives(xi: np.ndarray, problem: ProjectionProblem) -> np.ndarray:
    """``Ftilde @ xi`` for a batch: ``(batch, 4n)`` as (vx, ax, vy, ay)."""
    return xi @ problem.Ftilde.T


def polar_update(
    state: ProjectionState, problem: ProjectionProblem, seed_xi: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form angle and clipped magnitude for velocity and acceleration.

    ``seed_xi`` is accepted for signature symmetry with the other steps; the
    update depends only on the current coefficients.
    """
    n = problem.basis.n
    der = state.constraint_values(problem)[:, : 4 * n]
    vx, ax, vy, ay = der[:, :n], der[:, n : 2 * n], der[:, 2 * n : 3 * n], der[:, 3 * n :]
    # atan2(0, 0) is 0 in numpy, which is the documented choice
    alpha = np.hstack([np.arctan2(vy, vx), np.arctan2(ay, ax)])
    mag = np.hstack([np.hypot(vx, vy), np.hypot(ax, ay)])
    d = np.clip(mag, problem.d_min, problem.d_max)
    return alpha, d


def slack_update(state: ProjectionState, problem: ProjectionProblem) -> np.ndarray:
    # minimizer of ||G xi - b + s||^2 over s >= 0
    g = state.constraint_values(problem)[:, problem.Ftilde.shape[0] :]
    return np.maximum(0.0, problem.b_barrier - g)


def polar_target(alpha: np.ndarray, d: np.ndarray, n: int) -> np.ndarray:
    av, aa = alpha[:, :n], alpha[:, n:]
    dv, da = d[:, :n], d[:, n:]
    return np.hstack([dv * np.cos(av), da * np.cos(aa), dv * np.sin(av), da * np.sin(aa)])


def multiplier_target_update(
    state: ProjectionState, problem: ProjectionProblem
) -> tuple[np.ndarray, np.ndarray]:
    """Refresh the target from ``(alpha, d, s)``, then step the multipliers.

    The multiplier moves against the residual ``F xi - e`` taken with the
    refreshed target; with the ``-lambda^T xi`` term in the Lagrangian this
    is the direction that drives the residual to zero. Returns ``(lam, e)``.
    """
    F = problem.F
    xi = np.atleast_2d(state.xi)
    e = np.hstack([polar_target(state.alpha, state.d, problem.basis.n), problem.b_barrier - state.s])
    resid = xi @ F.T - e
    lam = state.lam - problem.rho * resid @ F
    return lam, e


def xi_update(
    state: ProjectionState,
    problem: ProjectionProblem,
    seed_xi: np.ndarray,
    b: np.ndarray | None = None,
) -> np.ndarray:
    """Solve the equality-constrained quadratic step via the cached KKT inverse."""
    K_inv = problem.kkt_inverse()
    nx = problem.nvar
    seed_xi = np.atleast_2d(seed_xi)
    b = problem.b if b is None else b
    b = np.broadcast_to(np.atleast_2d(b), (seed_xi.shape[0], problem.A.shape[0]))
    rhs_top = seed_xi + state.lam + problem.rho * state.e @ problem.F
    rhs = np.hstack([rhs_top, b])
    return (rhs @ K_inv.T)[:, :nx]


def initial_state(seed_xi: np.ndarray, problem: ProjectionProblem) -> ProjectionState:
    seed_xi = np.atleast_2d(np.asarray(seed_xi, dtype=float))
    batch = seed_xi.shape[0]
    st = ProjectionState(
        xi=seed_xi.copy(),
        alpha=np.zeros((batch, 2 * problem.basis.n)),
        d=np.zeros((batch, 2 * problem.basis.n)),
        lam=np.zeros_like(seed_xi),
        s=np.zeros((batch, problem.G.shape[0])),
        e=np.zeros((batch, problem.F.shape[0])),
    )
    st.alpha, st.d = polar_update(st, problem)
    st.s = slack_update(st, problem)
    st.e = np.hstack([polar_target(st.alpha, st.d, problem.basis.n), problem.b_barrier - st.s])
    return st


def am_residual(xi: np.ndarray, e: np.ndarray, problem: ProjectionProblem) -> np.ndarray:
    return np.max(np.abs(np.atleast_2d(xi) @ problem.F.T - e), axis=1)


def _fused_operators(problem: ProjectionProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blocks of the KKT inverse folded into constraint space.

    The multiplier is always ``lam == -rho F^T u`` with ``u`` the running
    sum of residuals ``F xi - e``, so the coefficient step is
    ``xi = seed M + b N + rho (e - u) F M`` where ``M`` and ``N`` are the
    top blocks of the (transposed) KKT inverse, so the multiplier never has
    to be formed explicitly.
    """
    if "fused" not in problem._cache:
        K_inv = problem.kkt_inverse()
        nx = problem.nvar
        M = K_inv[:nx, :nx].T
        N = K_inv[:nx, nx:].T
        P = problem.rho * problem.F @ M
        problem._cache["fused"] = (M, N, P)
    return problem._cache["fused"]


def _polar_barrier_target(w: np.ndarray, problem: ProjectionProblem) -> np.ndarray:
    """Target ``e`` from ``w = F xi``.

    Same result as the polar and slack steps followed by the target refresh,
    written without the angle round trip.
    """
    n2 = 2 * problem.basis.n
    e = np.empty_like(w)
    px, py = w[:, :n2], w[:, n2 : 2 * n2]
    mag = np.hypot(px, py)
    d = np.minimum(np.maximum(mag, problem.d_min), problem.d_max)
    zero = mag == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = d / mag
    # atan2(0, 0) == 0 puts a zero vector's target on the positive x axis
    np.copyto(scale, 0.0, where=zero)
    np.multiply(px, scale, out=e[:, :n2])
    np.copyto(e[:, :n2], d, where=zero)
    np.multiply(py, scale, out=e[:, n2 : 2 * n2])
    np.minimum(w[:, 2 * n2 :], problem.b_barrier, out=e[:, 2 * n2 :])
    return e


def project_batch(
    seeds: np.ndarray,
    problem: ProjectionProblem,
    b: np.ndarray | None = None,
    max_iters: int = 75,
    tol: float = 1e-3,
) -> ProjectionResult:
    """Project a ``(batch, 2 * nvar)`` stack of seeds.

    Each candidate stops updating once its own residual drops below ``tol``,
    so results do not depend on what else is in the batch. ``b`` may be a
    single target or one row per seed.

    The loop runs the same four steps as :func:`polar_update`,
    :func:`slack_update`, :func:`multiplier_target_update` and
    :func:`xi_update`, carried in constraint space for speed.
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    batch = seeds.shape[0]
    b_all = problem.b if b is None else np.asarray(b, dtype=float)
    b_all = np.broadcast_to(np.atleast_2d(b_all), (batch, problem.A.shape[0]))
    M, N, P = _fused_operators(problem)
    FT = problem.F.T

    c = seeds @ M + b_all @ N
    z = seeds @ FT
    e = _polar_barrier_target(z, problem)
    u = np.zeros_like(z)
    history = np.full((batch, max_iters), np.nan)
    converged = np.zeros(batch, dtype=bool)
    iterations = np.zeros(batch, dtype=int)
    active = np.arange(batch)
    za, ea, ua, ca = z, e, u, c

    for it in range(max_iters):
        ea = _polar_barrier_target(za, problem)
        ua = ua + (za - ea)
        za = (ca + (ea - ua) @ P) @ FT
        res = np.max(np.abs(za - ea), axis=1)
        e[active], u[active] = ea, ua
        history[active, it] = res
        iterations[active] = it + 1
        done = res <= tol
        if done.any():
            converged[active[done]] = True
            keep = ~done
            active = active[keep]
            za, ea, ua, ca = za[keep], ea[keep], ua[keep], ca[keep]
        if active.size == 0:
            break

    xi = c + (e - u) @ P
    return ProjectionResult(xi, history, converged, iterations)


def project(
    seed_xi: np.ndarray,
    problem: ProjectionProblem,
    max_iters: int = 75,
    tol: float = 1e-3,
) -> ProjectionResult:
    """Single-seed projection; ``xi`` is 1-D and the history trimmed to the run length."""
    res = project_batch(np.asarray(seed_xi)[None], problem, None, max_iters, tol)
    k = int(res.iterations[0])
    return ProjectionResult(res.xi[0], res.residual_history[0, :k], res.converged[:1], res.iterations[:1])


def residual_norm(xi: np.ndarray, problem: ProjectionProblem) -> np.ndarray | float:
    """Constraint violation of decoded trajectories (scalar for a 1-D ``xi``)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    xi2 = np.atleast_2d(xi)
    lim = problem.limits
    n = problem.basis.n
    der = _derivatives(xi2, problem)
    speed = np.hypot(der[:, :n], der[:, 2 * n : 3 * n])
    accel = np.hypot(der[:, n : 2 * n], der[:, 3 * n :])
    barrier = np.maximum(0.0, xi2 @ problem.G.T - problem.b_barrier)
    r = (
        np.linalg.norm(barrier, axis=1)
        + np.linalg.norm(np.maximum(0.0, speed - lim.v_max), axis=1)
        + np.linalg.norm(np.maximum(0.0, lim.v_min - speed), axis=1)
        + np.linalg.norm(np.maximum(0.0, accel - lim.a_max), axis=1)
    )
    return float(r[0]) if single else r
