"""Distance-error model, noisy collision-cost samples and the MMD surrogate.

A predicted distance ``d[k]`` is perturbed by a step-dependent error to give
``m`` samples per step. Each sample row becomes one collision cost
``prod_k max(r_safe - d_i[k], 0)``. The risk of a trajectory is the squared
RKHS distance between the empirical embedding of those costs and a point
mass at zero, evaluated with an RBF kernel through the kernel trick.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .seeding import SeedLike, as_generator


@dataclass(frozen=True)
class KernelConfig:
    gamma: float = 0.1
    sample_count: int = 100

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if int(self.sample_count) != self.sample_count or self.sample_count < 1:
            raise ValueError(f"sample_count must be a positive integer, got {self.sample_count}")


@dataclass(frozen=True, eq=False)
class ErrorModel:
    """Per-step distance error ``d_gt - d_pred``.

    Attributes:
        mu: Mean per step (gaussian mode).
        sigma: Standard deviation per step (gaussian mode).
        banks: Observed residuals per step (empirical mode).
        mode: ``"gaussian"`` or ``"empirical"``.
        correlated: Draw one standard-normal (or one bank rank) per sample row
            and reuse it across steps instead of drawing per step.
    """

    mu: np.ndarray
    sigma: np.ndarray
    banks: tuple[np.ndarray, ...] = field(default=())
    mode: str = "gaussian"
    correlated: bool = False

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if mu.shape != sigma.shape or mu.size == 0:
            raise ValueError(f"mu and sigma must be equal-length and non-empty, got {mu.shape} and {sigma.shape}")
        if np.any(sigma < 0):
            raise ValueError("sigma must be non-negative")
        if self.mode not in ("gaussian", "empirical"):
            raise ValueError(f"unknown error model mode {self.mode!r}")
        banks = tuple(np.asarray(b, dtype=float).reshape(-1) for b in self.banks)
        if self.mode == "empirical":
            if len(banks) != mu.size or any(b.size == 0 for b in banks):
                raise ValueError("empirical mode needs one non-empty residual bank per step")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "banks", banks)

    @property
    def steps(self) -> int:
        return self.mu.size

    @classmethod
    def gaussian(cls, mu: Iterable[float], sigma: Iterable[float], correlated: bool = False) -> ErrorModel:
        return cls(np.asarray(list(mu), float), np.asarray(list(sigma), float), correlated=correlated)

    @classmethod
    def default_synthetic(cls, frames: int = 4) -> ErrorModel:
        """Mean ``0.1 k`` and std ``0.15 (1 + 0.5 k)`` for ``k = 0..frames``."""
        k = np.arange(frames + 1, dtype=float)
        return cls(0.1 * k, 0.15 * (1 + 0.5 * k))

    @classmethod
    def zero(cls, frames: int = 4) -> ErrorModel:
        return cls(np.zeros(frames + 1), np.zeros(frames + 1))

    def to_text(self) -> str:
        return "".join(f"{k} {float(m)!r} {float(s)!r}\n" for k, (m, s) in enumerate(zip(self.mu, self.sigma)))

    @classmethod
    def from_text(cls, text: str) -> ErrorModel:
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows or any(len(r) != 3 for r in rows):
            raise ValueError("error model table needs 'k mu sigma' rows")
        ks = [int(r[0]) for r in rows]
        if ks != list(range(len(rows))):
            raise ValueError(f"error model steps must be 0..{len(rows) - 1} in order, got {ks}")
        return cls(np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows]))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.to_text())
        if self.mode == "empirical":
            bank_path = path.with_name(path.name + ".residuals")
            bank_path.write_text(
                "".join(" ".join([str(k), *map(repr, b.tolist())]) + "\n" for k, b in enumerate(self.banks))
            )

    @classmethod
    def load(cls, path: str | Path) -> ErrorModel:
        path = Path(path)
        model = cls.from_text(path.read_text())
        bank_path = path.with_name(path.name + ".residuals")
        if bank_path.exists():
            banks = []
            for ln in bank_path.read_text().splitlines():
                parts = ln.split()
                banks.append(np.array([float(v) for v in parts[1:]]))
            return cls(model.mu, model.sigma, tuple(banks), "empirical")
        return model


def fit_error_model(observations: Iterable[tuple[int, float, float]], mode: str = "gaussian") -> ErrorModel:
    """Fit per-step residual statistics from ``(k, d_pred, d_gt)`` triples.

    Steps must be contiguous from 0 and each needs at least two observations.
    The standard deviation uses the unbiased (``ddof=1``) estimator.
    """
    per_step: dict[int, list[float]] = defaultdict(list)
    for k, d_pred, d_gt in observations:
        per_step[int(k)].append(float(d_gt) - float(d_pred))
    if not per_step:
        raise ValueError("no observations")
    top = max(per_step)
    for k in range(top + 1):
        if len(per_step.get(k, ())) < 2:
            raise ValueError(f"step {k} has {len(per_step.get(k, ()))} observations, need at least 2")
    res = [np.asarray(per_step[k]) for k in range(top + 1)]
    mu = np.array([r.mean() for r in res])
    sigma = np.array([r.std(ddof=1) for r in res])
    banks = tuple(res) if mode == "empirical" else ()
    return ErrorModel(mu, sigma, banks, mode)


def sample_noisy_distances(
    d: np.ndarray,
    model: ErrorModel,
    m: int,
    rng_seed: SeedLike,
    steps: np.ndarray | None = None,
) -> np.ndarray:
    """``(m, n)`` noisy copies of ``d``.

    ``steps[k]`` names the model entry used for column ``k``; by default
    column ``k`` uses entry ``k``.
    """
    d = np.asarray(d, dtype=float).reshape(-1)
    n = d.size
    steps = np.arange(n) if steps is None else np.asarray(steps, dtype=int)
    if steps.shape != (n,):
        raise ValueError(f"steps has shape {steps.shape}, expected ({n},)")
    if n and (steps.min() < 0 or steps.max() >= model.steps):
        raise ValueError(f"error model covers {model.steps} steps, trajectory needs step {steps.max()}")
    rng = as_generator(rng_seed)
    if model.mode == "gaussian":
        z = rng.standard_normal((m, 1) if model.correlated else (m, n))
        eps = model.mu[steps] + model.sigma[steps] * z
    else:
        u = rng.random((m, 1) if model.correlated else (m, n))
        eps = np.empty((m, n))
        for k in range(n):
            bank = model.banks[steps[k]]
            idx = np.minimum((u[:, 0 if model.correlated else k] * bank.size).astype(int), bank.size - 1)
            eps[:, k] = bank[idx]
    return d + eps


def collision_cost_samples(noisy: np.ndarray, r_safe: float) -> np.ndarray:
    """Per-row product of clearance deficits; works on ``(..., m, n)`` stacks."""
    if not r_safe > 0:
        raise ValueError(f"r_safe must be positive, got {r_safe}")
    return np.prod(np.maximum(r_safe - np.asarray(noisy, dtype=float), 0.0), axis=-1)


def rbf(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * (a - b) ** 2)


def mmd_cost(samples: np.ndarray, kernel: KernelConfig = KernelConfig()) -> np.ndarray | float:
    """Squared MMD between the sample embedding and a point mass at zero.

    Accepts ``(m,)`` or a batch ``(batch, m)``.
    """
    f = np.asarray(samples, dtype=float)
    if f.shape[-1] == 0:
        raise ValueError("mmd_cost needs at least one sample")
    single = f.ndim == 1
    f = np.atleast_2d(f)
    m = f.shape[-1]
    g = kernel.gamma
    # zero samples are common; their kernel terms are closed-form
    kff = np.empty(f.shape[0])
    for r, row in enumerate(f):
        nz = row[row != 0.0]
        z = m - nz.size
        k0 = np.exp(-g * nz**2).sum()
        kff[r] = z * z + 2.0 * z * k0 + rbf(nz[:, None], nz[None, :], g).sum()
    kff /= m**2
    kf0 = np.exp(-g * f**2).sum(axis=1) / m
    val = kff - 2.0 * kf0 + 1.0
    val = np.where((val < 0) & (val > -1e-12), 0.0, val)
    return float(val[0]) if single else val
