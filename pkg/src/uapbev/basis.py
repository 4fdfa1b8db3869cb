"""Piecewise-cubic trajectory basis.

Each segment is a cubic in local time ``tau`` sampled every ``dt`` seconds.
Rows of ``W`` are ordered by global time step; the matrix is block-diagonal
per segment, and smoothness across joins lives in the separate continuity
matrix ``C`` rather than in the basis itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BasisSet:
    """Position, velocity and acceleration basis matrices for one axis.

    Attributes:
        segment_count: Number of cubic pieces.
        steps_per_segment: Samples per piece.
        dt: Sample period in seconds.
        W: ``(n, 4 * segment_count)`` position basis.
        W1: Velocity basis, same shape.
        W2: Acceleration basis, same shape.
        C: ``(3 * (segment_count - 1), 4 * segment_count)`` C0/C1/C2 join rows.
    """

    segment_count: int
    steps_per_segment: int
    dt: float
    W: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    C: np.ndarray

    @property
    def n(self) -> int:
        return self.segment_count * self.steps_per_segment

    @property
    def nvar(self) -> int:
        """Coefficients per axis."""
        return 4 * self.segment_count

    @property
    def segment_duration(self) -> float:
        return self.steps_per_segment * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.dt


@dataclass(frozen=True)
class TrajectoryCoeffs:
    cx: np.ndarray
    cy: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.cx) != np.shape(self.cy):
            raise ValueError(f"cx and cy lengths differ: {np.shape(self.cx)} vs {np.shape(self.cy)}")

    @property
    def xi(self) -> np.ndarray:
        """Stacked ``(cx, cy)`` vector."""
        return np.concatenate([self.cx, self.cy])

    @classmethod
    def from_xi(cls, xi: np.ndarray) -> TrajectoryCoeffs:
        xi = np.asarray(xi, dtype=float)
        if xi.ndim != 1 or xi.size % 2:
            raise ValueError(f"xi must be a 1-D vector of even length, got shape {xi.shape}")
        half = xi.size // 2
        return cls(xi[:half].copy(), xi[half:].copy())


@dataclass(frozen=True)
class StateSequence:
    """Per-step positions and derivatives (m, m/s, m/s^2)."""

    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    ax: np.ndarray
    ay: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.x)
        for name in ("y", "vx", "vy", "ax", "ay"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"state array {name!r} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)

    @property
    def accel_norm(self) -> np.ndarray:
        return np.hypot(self.ax, self.ay)


def _segment_rows(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    one = np.ones_like(tau)
    zero = np.zeros_like(tau)
    p = np.stack([one, tau, tau**2, tau**3], axis=-1)
    v = np.stack([zero, one, 2 * tau, 3 * tau**2], axis=-1)
    a = np.stack([zero, zero, 2 * one, 6 * tau], axis=-1)
    return p, v, a


def build_basis(segment_count: int, steps_per_segment: int, dt: float) -> BasisSet:
    """Build the block-diagonal cubic basis and its continuity rows.

    Row ``k`` of segment ``j`` is evaluated at ``tau = (k - j * steps_per_segment) * dt``.
    A segment ends at ``tau = steps_per_segment * dt``, which is where the next
    one starts, so the continuity rows compare the end of piece ``j`` against
    ``tau = 0`` of piece ``j + 1``.
    """
    if int(segment_count) != segment_count or segment_count <= 0:
        raise ValueError(f"segment_count must be a positive integer, got {segment_count!r}")
    if int(steps_per_segment) != steps_per_segment or steps_per_segment <= 0:
        raise ValueError(f"steps_per_segment must be a positive integer, got {steps_per_segment!r}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    segment_count = int(segment_count)
    steps_per_segment = int(steps_per_segment)

    n = segment_count * steps_per_segment
    nvar = 4 * segment_count
    W = np.zeros((n, nvar))
    W1 = np.zeros((n, nvar))
    W2 = np.zeros((n, nvar))
    tau = np.arange(steps_per_segment) * dt
    p, v, a = _segment_rows(tau)
    for j in range(segment_count):
        rows = slice(j * steps_per_segment, (j + 1) * steps_per_segment)
        cols = slice(4 * j, 4 * j + 4)
        W[rows, cols] = p
        W1[rows, cols] = v
        W2[rows, cols] = a

    T = steps_per_segment * dt
    end_p, end_v, end_a = _segment_rows(np.array([T]))
    start_p, start_v, start_a = _segment_rows(np.array([0.0]))
    C = np.zeros((3 * (segment_count - 1), nvar))
    for j in range(segment_count - 1):
        for q, (end, start) in enumerate(((end_p, start_p), (end_v, start_v), (end_a, start_a))):
            C[3 * j + q, 4 * j : 4 * j + 4] = end[0]
            C[3 * j + q, 4 * (j + 1) : 4 * (j + 1) + 4] = -start[0]

    for M in (W, W1, W2, C):
        M.setflags(write=False)
    return BasisSet(segment_count, steps_per_segment, float(dt), W, W1, W2, C)


def eval_trajectory(basis: BasisSet, coeffs: TrajectoryCoeffs) -> StateSequence:
    cx = np.asarray(coeffs.cx, dtype=float)
    cy = np.asarray(coeffs.cy, dtype=float)
    if cx.shape != (basis.nvar,) or cy.shape != (basis.nvar,):
        raise ValueError(f"coefficient length {cx.shape} does not match basis ({basis.nvar},)")
    return StateSequence(
        basis.W @ cx, basis.W @ cy, basis.W1 @ cx, basis.W1 @ cy, basis.W2 @ cx, basis.W2 @ cy
    )


def eval_batch(basis: BasisSet, xi: np.ndarray) -> tuple[np.ndarray, ...]:
    """Evaluate a ``(batch, 2 * nvar)`` stack of coefficient vectors.

    Returns ``(x, y, vx, vy, ax, ay)``, each ``(batch, n)``.
    """
    xi = np.atleast_2d(xi)
    cx, cy = xi[:, : basis.nvar], xi[:, basis.nvar :]
    return (
        cx @ basis.W.T,
        cy @ basis.W.T,
        cx @ basis.W1.T,
        cy @ basis.W1.T,
        cx @ basis.W2.T,
        cy @ basis.W2.T,
    )
