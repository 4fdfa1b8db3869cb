"""Occupancy grids and Euclidean distance fields.

Cell ``(i, j)`` (row, column) has its center at
``origin + resolution * (j, i)`` in the ego-centric frame, so rows run along
``y`` and columns along ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .basis import StateSequence

MAGIC = "UAPGRID1"


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Binary occupancy on a regular grid.

    Attributes:
        cells: ``(height, width)`` boolean array, row-major.
        resolution: Meters per cell.
        origin: ``(x, y)`` of the center of cell ``(0, 0)``.
    """

    cells: np.ndarray
    resolution: float = 0.2
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] == 0 or cells.shape[1] == 0:
            raise ValueError(f"grid must be a non-empty 2-D array, got shape {cells.shape}")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        object.__setattr__(self, "cells", cells.astype(bool))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def same_geometry(self, other: OccupancyGrid) -> bool:
        return self.cells.shape == other.cells.shape and self.resolution == other.resolution and self.origin == other.origin

    @classmethod
    def empty(cls, height: int, width: int, resolution: float, origin: tuple[float, float]) -> OccupancyGrid:
        return cls(np.zeros((height, width), dtype=bool), resolution, origin)

    @classmethod
    def centered(cls, size: int = 200, resolution: float = 0.2) -> OccupancyGrid:
        """Empty ``size x size`` grid centered on the ego."""
        half = (size - 1) / 2 * resolution
        return cls.empty(size, size, resolution, (-half, -half))

    def to_text(self) -> str:
        header = f"{MAGIC} {self.height} {self.width} {float(self.resolution)!r} {self.origin[0]!r} {self.origin[1]!r}"
        rows = ["".join("1" if c else "0" for c in row) for row in self.cells]
        return "\n".join([header, *rows]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> OccupancyGrid:
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty grid file")
        parts = lines[0].split()
        if len(parts) != 6 or parts[0] != MAGIC:
            raise ValueError(f"bad grid header {lines[0]!r}")
        h, w = int(parts[1]), int(parts[2])
        res, ox, oy = float(parts[3]), float(parts[4]), float(parts[5])
        body = lines[1 : 1 + h]
        if len(body) != h or any(len(r) != w or set(r) - {"0", "1"} for r in body):
            raise ValueError(f"grid body does not match header {h}x{w}")
        cells = np.array([[c == "1" for c in r] for r in body], dtype=bool).reshape(h, w)
        return cls(cells, res, (ox, oy))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> OccupancyGrid:
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Distance in meters from each cell center to the nearest occupied one."""

    grid: OccupancyGrid
    values: np.ndarray

    @property
    def resolution(self) -> float:
        return self.grid.resolution

    @property
    def origin(self) -> tuple[float, float]:
        return self.grid.origin


@dataclass(frozen=True)
class QueryResult:
    distance: np.ndarray
    outside: np.ndarray


def empty_sentinel(grid: OccupancyGrid) -> float:
    return grid.resolution * (grid.height + grid.width)


def build_distance_field(grid: OccupancyGrid) -> DistanceField:
    """Exact Euclidean distance transform; an empty grid gets a finite sentinel."""
    if not grid.cells.any():
        values = np.full(grid.cells.shape, empty_sentinel(grid))
    else:
        values = ndimage.distance_transform_edt(~grid.cells) * grid.resolution
    values.setflags(write=False)
    return DistanceField(grid, values)


def query_distance(field: DistanceField, points: np.ndarray) -> QueryResult:
    """Bilinear interpolation of the field at ``(..., 2)`` points in meters.

    Points off the grid are clamped to the border and flagged in ``outside``.
    """
    pts = np.asarray(points, dtype=float)
    h, w = field.values.shape
    res = field.resolution
    cx = (pts[..., 0] - field.origin[0]) / res
    cy = (pts[..., 1] - field.origin[1]) / res
    outside = (cx < 0) | (cx > w - 1) | (cy < 0) | (cy > h - 1)
    cx = np.clip(cx, 0.0, w - 1)
    cy = np.clip(cy, 0.0, h - 1)
    j0 = np.minimum(np.floor(cx).astype(int), max(w - 2, 0))
    i0 = np.minimum(np.floor(cy).astype(int), max(h - 2, 0))
    j1 = np.minimum(j0 + 1, w - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    fx = cx - j0
    fy = cy - i0
    v = field.values
    top = (1 - fx) * v[i0, j0] + fx * v[i0, j1]
    bot = (1 - fx) * v[i1, j0] + fx * v[i1, j1]
    return QueryResult((1 - fy) * top + fy * bot, outside)


@dataclass(frozen=True, eq=False)
class GridSequence:
    """Predicted grids for future frames ``0..F`` sharing one geometry."""

    grids: tuple[OccupancyGrid, ...]
    frame_period: float = 0.5

    def __post_init__(self) -> None:
        grids = tuple(self.grids)
        if not grids:
            raise ValueError("grid sequence is empty")
        for g in grids[1:]:
            if not g.same_geometry(grids[0]):
                raise ValueError("all grids in a sequence must share geometry")
        if not self.frame_period > 0:
            raise ValueError(f"frame_period must be positive, got {self.frame_period}")
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "_fields", tuple(build_distance_field(g) for g in grids))

    def __len__(self) -> int:
        return len(self.grids)

    @property
    def fields(self) -> tuple[DistanceField, ...]:
        return self._fields

    def frame_index(self, times: np.ndarray) -> np.ndarray:
        """Nearest predicted frame per time, holding the last frame beyond the horizon."""
        k = np.rint(np.asarray(times, dtype=float) / self.frame_period).astype(int)
        return np.clip(k, 0, len(self.grids) - 1)


def trajectory_distances(
    grids: GridSequence | Sequence[OccupancyGrid],
    traj: StateSequence,
    dt: float = 0.1,
) -> np.ndarray:
    """Distance to the nearest occupied cell at each trajectory step.

    Step ``k`` is at time ``k * dt`` and reads the nearest predicted frame.
    """
    if not isinstance(grids, GridSequence):
        if len(grids) == 0:
            raise ValueError("grid sequence is empty")
        grids = GridSequence(tuple(grids))
    return batch_distances(grids, np.asarray(traj.x)[None], np.asarray(traj.y)[None], dt)[0]


def batch_distances(grids: GridSequence, x: np.ndarray, y: np.ndarray, dt: float) -> np.ndarray:
    """``(batch, n)`` distances for ego-centric trajectory positions."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    phi = grids.frame_index(np.arange(x.shape[1]) * dt)
    out = np.empty_like(x, dtype=float)
    for f in np.unique(phi):
        cols = phi == f
        out[:, cols] = query_distance(grids.fields[f], np.stack([x[:, cols], y[:, cols]], axis=-1)).distance
    return out
