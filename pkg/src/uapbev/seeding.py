"""Behavioral sampling and Frenet seed trajectories.

A behavioral input is a (terminal lateral offset, velocity setpoint) pair.
Each one is turned into boundary conditions on the cubic basis, and the
seed is the smoothest coefficient vector (least squared acceleration) that
meets them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSet, StateSequence, TrajectoryCoeffs

SeedLike = int | np.random.Generator | None


@dataclass(frozen=True)
class BehavioralInput:
    lateral_offset_target: float
    velocity_setpoint: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lateral_offset_target) and np.isfinite(self.velocity_setpoint)):
            raise ValueError(f"behavioral input must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.lateral_offset_target, self.velocity_setpoint])


@dataclass(frozen=True)
class SamplingDistribution:
    """Gaussian over behavioral inputs, ordered (lateral offset, velocity)."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(f"sigma shape {sigma.shape} does not match mean of length {mu.size}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("mu and sigma must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def check_psd(self, tol: float = 1e-10) -> None:
        if not np.allclose(self.sigma, self.sigma.T, atol=tol, rtol=0.0):
            raise ValueError("sigma is not symmetric")
        w = np.linalg.eigvalsh(self.sigma)
        scale = max(1.0, float(np.abs(w).max(initial=0.0)))
        if w.min(initial=0.0) < -tol * scale:
            raise ValueError(f"sigma is not positive semi-definite (min eigenvalue {w.min():.3e})")


@dataclass(frozen=True)
class EgoState:
    """Ego kinematics in the planning (Frenet) frame."""

    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    ax: float = 0.0
    ay: float = 0.0


@dataclass(frozen=True)
class BoundaryConditions:
    """Equality system ``A @ xi = b`` over the stacked ``(cx, cy)`` vector."""

    A: np.ndarray
    b: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def residual(self, xi: np.ndarray) -> np.ndarray:
        return self.A @ xi - self.b


@dataclass(frozen=True)
class CostWeights:
    smooth: float = 1.0
    vel: float = 0.5
    lat: float = 0.2


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_behaviors(dist: SamplingDistribution, count: int, rng: SeedLike) -> np.ndarray:
    """Array form of :func:`sample_behaviors`, shape ``(count, 2)``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    dist.check_psd()
    w, V = np.linalg.eigh(0.5 * (dist.sigma + dist.sigma.T))
    L = V * np.sqrt(np.clip(w, 0.0, None))
    z = as_generator(rng).standard_normal((count, dist.mu.size))
    return dist.mu + z @ L.T


def sample_behaviors(dist: SamplingDistribution, count: int, rng_seed: SeedLike) -> list[BehavioralInput]:
    draws = draw_behaviors(dist, count, rng_seed)
    return [BehavioralInput(float(d), float(v)) for d, v in draws]


def boundary_matrix(basis: BasisSet) -> tuple[np.ndarray, tuple[str, ...]]:
    """Rows of ``A`` for the stacked ``(cx, cy)`` vector.

    x axis: initial pos/vel/acc, continuity, terminal vel/acc.
    y axis: initial pos/vel/acc, continuity, terminal pos/vel/acc.
    """
    nv = basis.nvar
    W, W1, W2, C = basis.W, basis.W1, basis.W2, basis.C
    ax_rows = [W[0], W1[0], W2[0], *C, W1[-1], W2[-1]]
    ay_rows = [W[0], W1[0], W2[0], *C, W[-1], W1[-1], W2[-1]]
    n_cont = C.shape[0]
    ax_labels = ["x0", "vx0", "ax0", *[f"cont_x{i}" for i in range(n_cont)], "vxT", "axT"]
    ay_labels = ["y0", "vy0", "ay0", *[f"cont_y{i}" for i in range(n_cont)], "yT", "vyT", "ayT"]
    A = np.zeros((len(ax_rows) + len(ay_rows), 2 * nv))
    A[: len(ax_rows), :nv] = np.array(ax_rows)
    A[len(ax_rows) :, nv:] = np.array(ay_rows)
    return A, tuple(ax_labels + ay_labels)


def boundary_vector(basis: BasisSet, ego: EgoState, p: BehavioralInput) -> np.ndarray:
    n_cont = basis.C.shape[0]
    zeros = [0.0] * n_cont
    bx = [ego.x, ego.vx, ego.ax, *zeros, p.velocity_setpoint, 0.0]
    by = [ego.y, ego.vy, ego.ay, *zeros, p.lateral_offset_target, 0.0, 0.0]
    return np.array(bx + by, dtype=float)


def boundary_vectors(basis: BasisSet, ego: EgoState, behaviors: np.ndarray) -> np.ndarray:
    """Batched ``b(p)`` for a ``(batch, 2)`` array of behaviors."""
    behaviors = np.atleast_2d(behaviors)
    base = boundary_vector(basis, ego, BehavioralInput(0.0, 0.0))
    out = np.tile(base, (behaviors.shape[0], 1))
    n_x = 3 + basis.C.shape[0] + 2
    out[:, n_x - 2] = behaviors[:, 1]
    out[:, n_x + 3 + basis.C.shape[0]] = behaviors[:, 0]
    return out


class SeedSolver:
    """Minimum-acceleration-energy fit of the boundary system.

    The KKT matrix depends only on the basis, so it is factorized once and
    reused for every behavioral sample.
    """

    def __init__(self, basis: BasisSet) -> None:
        self.basis = basis
        self.A, self.labels = boundary_matrix(basis)
        rank = np.linalg.matrix_rank(self.A)
        if rank < self.A.shape[0]:
            raise np.linalg.LinAlgError(
                f"boundary system is rank deficient ({rank} < {self.A.shape[0]} rows); "
                f"increase segment_count (got {basis.segment_count})"
            )
        nv = basis.nvar
        H = np.zeros((2 * nv, 2 * nv))
        H[:nv, :nv] = basis.W2.T @ basis.W2
        H[nv:, nv:] = basis.W2.T @ basis.W2
        m = self.A.shape[0]
        K = np.block([[H, self.A.T], [self.A, np.zeros((m, m))]])
        self._K_inv = np.linalg.inv(K)
        self._nx = 2 * nv

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Seed coefficients for one ``b`` (shape ``(m,)``) or a batch ``(batch, m)``."""
        b = np.asarray(b, dtype=float)
        single = b.ndim == 1
        b2 = np.atleast_2d(b)
        rhs = np.hstack([np.zeros((b2.shape[0], self._nx)), b2])
        xi = (rhs @ self._K_inv.T)[:, : self._nx]
        return xi[0] if single else xi


def seed_trajectory(
    p: BehavioralInput, ego_state: EgoState, basis: BasisSet
) -> tuple[TrajectoryCoeffs, BoundaryConditions]:
    solver = SeedSolver(basis)
    b = boundary_vector(basis, ego_state, p)
    xi = solver.solve(b)
    return TrajectoryCoeffs.from_xi(xi), BoundaryConditions(solver.A, b, solver.labels)


def analytic_cost(
    traj: StateSequence,
    p: BehavioralInput,
    weights: CostWeights = CostWeights(),
    cruise_speed: float | None = None,
) -> float:
    """Smoothness + speed tracking + lateral deviation.

    Speed is tracked against ``cruise_speed`` when given, otherwise against the
    behavior's own setpoint.
    """
    v_ref = p.velocity_setpoint if cruise_speed is None else cruise_speed
    return float(
        analytic_cost_batch(
            traj.y[None], traj.vx[None], traj.vy[None], traj.ax[None], traj.ay[None], v_ref, weights
        )[0]
    )


def analytic_cost_batch(
    y: np.ndarray,
    vx: np.ndarray,
    vy: np.ndarray,
    ax: np.ndarray,
    ay: np.ndarray,
    v_ref: float | np.ndarray,
    weights: CostWeights = CostWeights(),
) -> np.ndarray:
    v_ref = np.asarray(v_ref, dtype=float)
    if v_ref.ndim == 1:
        v_ref = v_ref[:, None]
    smooth = np.sum(ax**2 + ay**2, axis=-1)
    vel = np.sum((np.hypot(vx, vy) - v_ref) ** 2, axis=-1)
    lat = np.sum(y**2, axis=-1)
    return weights.smooth * smooth + weights.vel * vel + weights.lat * lat
