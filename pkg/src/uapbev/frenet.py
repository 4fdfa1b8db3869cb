"""Frenet <-> Cartesian conversion along a sampled centerline.

Between two samples the reference point moves linearly and the normal
direction is blended linearly between the miter normals of the two end
vertices. The forward map is continuous across vertices, and the inverse
finds the blend parameter whose normal line passes through the query point,
so the round trip is exact inside the lane tube.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import StateSequence


class FrenetRangeError(ValueError):
    """Arc length outside the centerline."""


class AmbiguousProjectionError(ValueError):
    """A point maps equally well onto two non-adjacent parts of the centerline."""


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True, eq=False)
class Centerline:
    """Reference polyline with cumulative arc length.

    Attributes:
        points: ``(N, 2)`` vertices in meters.
        half_width: Lane half-width in meters.
        max_spacing: Largest allowed vertex spacing, or ``None`` for no limit.
    """

    points: np.ndarray
    half_width: float = 1.75
    max_spacing: float | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError(f"centerline needs an (N>=2, 2) array, got shape {pts.shape}")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0):
            raise ValueError("centerline arc length must be strictly increasing (repeated vertex)")
        if self.max_spacing is not None and lengths.max() > self.max_spacing:
            raise ValueError(f"vertex spacing {lengths.max():.3f} m exceeds max_spacing {self.max_spacing} m")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        tangents = seg / lengths[:, None]
        seg_normals = _rot90(tangents)
        vn = np.empty_like(pts)
        vn[0], vn[-1] = seg_normals[0], seg_normals[-1]
        mid = seg_normals[:-1] + seg_normals[1:]
        norm = np.hypot(mid[:, 0], mid[:, 1])
        if np.any(norm < 1e-9):
            raise ValueError("centerline folds back on itself")
        vn[1:-1] = mid / norm[:, None]
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_s", np.concatenate([[0.0], np.cumsum(lengths)]))
        object.__setattr__(self, "_vertex_normals", vn)

    @property
    def s(self) -> np.ndarray:
        return self._s

    @property
    def length(self) -> float:
        return float(self._s[-1])

    @classmethod
    def straight(cls, length: float, half_width: float = 1.75, heading: float = 0.0) -> Centerline:
        d = np.array([np.cos(heading), np.sin(heading)])
        return cls(np.array([[0.0, 0.0], length * d]), half_width)

    @classmethod
    def from_file(cls, path: str | Path, half_width: float = 1.75, max_spacing: float | None = None) -> Centerline:
        """Load one ``x y`` pair per line (meters)."""
        pts = np.loadtxt(path, dtype=float, ndmin=2)
        return cls(pts, half_width, max_spacing)

    def _locate(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        tol = 1e-9 * max(1.0, self.length)
        bad = (s < -tol) | (s > self.length + tol) | ~np.isfinite(s)
        if np.any(bad):
            raise FrenetRangeError(
                f"arc length {s[bad].ravel()[0]!r} outside centerline range [0, {self.length:.6g}]"
            )
        i = np.clip(np.searchsorted(self._s, s, side="right") - 1, 0, len(self._s) - 2)
        t = (s - self._s[i]) / (self._s[i + 1] - self._s[i])
        return i, np.clip(t, 0.0, 1.0)

    def frame(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Reference point, unit tangent and unit left normal at arc length ``s``."""
        i, t = self._locate(s)
        P0, P1 = self.points[i], self.points[i + 1]
        r = P0 + t[..., None] * (P1 - P0)
        nrm = (1 - t[..., None]) * self._vertex_normals[i] + t[..., None] * self._vertex_normals[i + 1]
        nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
        return r, -_rot90(nrm), nrm

    def to_cartesian_points(self, s: np.ndarray, d: np.ndarray) -> np.ndarray:
        r, _, nrm = self.frame(s)
        return r + np.asarray(d, dtype=float)[..., None] * nrm

    def to_frenet_point(self, p: np.ndarray, max_offset: float | None = None) -> tuple[float, float]:
        """Invert the bilinear patch map for one point.

        Every segment whose patch contains ``p`` proposes an ``(s, d)``; the
        smallest ``|d|`` wins. Two proposals from non-adjacent segments with
        equal ``|d|`` raise :class:`AmbiguousProjectionError`.
        """
        p = np.asarray(p, dtype=float)
        P0, P1 = self.points[:-1], self.points[1:]
        E = P1 - P0
        N0, dN = self._vertex_normals[:-1], self._vertex_normals[1:] - self._vertex_normals[:-1]
        q = p - P0

        def cross(a, b):
            return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

        # (q - tE) x (N0 + t dN) = 0  ->  a2 t^2 + a1 t + a0 = 0
        a2 = -cross(E, dN)
        a1 = cross(q, dN) - cross(E, N0)
        a0 = cross(q, N0)
        roots = _quadratic_roots(a2, a1, a0)
        for _ in range(2):
            f = (a2[:, None] * roots + a1[:, None]) * roots + a0[:, None]
            fp = 2 * a2[:, None] * roots + a1[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(fp != 0, f / fp, 0.0)
            roots = np.where(np.isfinite(roots), roots - step, roots)
        ok = np.isfinite(roots) & (roots >= -1e-9) & (roots <= 1 + 1e-9)
        seg_idx, which = np.nonzero(ok)
        cand_seg = seg_idx.tolist()
        cand_t = np.clip(roots[seg_idx, which], 0.0, 1.0).tolist()
        if not cand_seg:
            raise FrenetRangeError(f"point {p.tolist()} does not project onto the centerline")
        seg = np.array(cand_seg)
        t = np.array(cand_t)
        nvec = N0[seg] + t[:, None] * dN[seg]
        base = P0[seg] + t[:, None] * E[seg]
        d = np.einsum("ij,ij->i", p - base, nvec) / np.linalg.norm(nvec, axis=1)
        s = self._s[seg] + t * (self._s[seg + 1] - self._s[seg])
        limit = 2.0 * self.half_width if max_offset is None else max_offset
        order = np.lexsort((s, np.abs(d)))
        best = order[0]
        if abs(d[best]) > limit:
            raise FrenetRangeError(f"point {p.tolist()} is {abs(d[best]):.3f} m off the centerline")
        tol = 1e-9 * max(1.0, abs(d[best]))
        for j in order[1:]:
            if abs(abs(d[j]) - abs(d[best])) > tol:
                break
            # same point reached from a neighbouring segment is fine
            if abs(s[j] - s[best]) > 1e-9 and abs(seg[j] - seg[best]) > 1:
                raise AmbiguousProjectionError(
                    f"point {p.tolist()} is equidistant to arc lengths {s[best]:.6g} and {s[j]:.6g}"
                )
        return float(s[best]), float(d[best])


def _quadratic_roots(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Real roots of ``a t^2 + b t + c`` per row, ``(k, 2)`` with NaN padding.

    Uses the cancellation-free form so nearly straight segments (tiny ``a``)
    keep full precision.
    """
    out = np.full((a.size, 2), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.abs(a) <= 1e-14 * np.maximum(np.abs(b), 1e-300)
        out[lin, 0] = np.where(b[lin] != 0, -c[lin] / b[lin], np.nan)
        quad = ~lin
        disc = b[quad] ** 2 - 4 * a[quad] * c[quad]
        real = disc >= 0
        sq = np.sqrt(np.where(real, disc, 0.0))
        qq = -0.5 * (b[quad] + np.copysign(sq, b[quad]))
        r1 = np.where(real & (qq != 0), qq / a[quad], np.nan)
        r2 = np.where(real & (qq != 0), c[quad] / qq, np.nan)
        # qq == 0 only when b == c == 0, so t = 0 is the double root
        r1 = np.where(real & (qq == 0), 0.0, r1)
        out[quad, 0], out[quad, 1] = r1, r2
    return out


def frenet_to_cartesian(centerline: Centerline, frenet_states: StateSequence) -> StateSequence:
    """Map positions exactly and derivatives by the local frame rotation.

    Curvature terms in the derivative mapping are dropped.
    """
    s = np.asarray(frenet_states.x, dtype=float)
    d = np.asarray(frenet_states.y, dtype=float)
    r, tan, nrm = centerline.frame(s)
    pos = r + d[:, None] * nrm
    vel = np.asarray(frenet_states.vx)[:, None] * tan + np.asarray(frenet_states.vy)[:, None] * nrm
    acc = np.asarray(frenet_states.ax)[:, None] * tan + np.asarray(frenet_states.ay)[:, None] * nrm
    return StateSequence(pos[:, 0], pos[:, 1], vel[:, 0], vel[:, 1], acc[:, 0], acc[:, 1])


def cartesian_to_frenet(centerline: Centerline, points) -> list[tuple[float, float]]:
    return [centerline.to_frenet_point(p) for p in np.asarray(points, dtype=float).reshape(-1, 2)]
