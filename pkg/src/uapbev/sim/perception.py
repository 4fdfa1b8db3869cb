"""Synthetic BEV prediction with horizon-growing corruption.

Grids are road-aligned and centred on the ego: grid ``x`` is arc length
relative to the ego and grid ``y`` is the road lateral offset, which is
the planning frame. Frame ``f`` shows the neighbors propagated ``f`` frame
periods ahead by their scripts. Each predicted footprint is translated by
Gaussian jitter whose std grows as ``jitter * (1 + f)``, dropped with
probability ``dropout * f``, and the frame is then dilated or eroded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..config import EmulationConfig
from ..occupancy import GridSequence, OccupancyGrid
from ..projection import LeadVehicleTrack
from .scenario import NeighborScript


@dataclass(frozen=True)
class Footprint:
    name: str
    x: float
    y: float
    radius: float


@dataclass(frozen=True, eq=False)
class Perception:
    """One emulated prediction.

    Attributes:
        predicted: Corrupted grids, frames ``0..F``.
        truth: Uncorrupted rasterization of the same frames.
        footprints: Per frame, the predicted (noisy, surviving) footprints.
        lead: Lead vehicle track at planner steps, or ``None``.
    """

    predicted: GridSequence
    truth: GridSequence
    footprints: tuple[tuple[Footprint, ...], ...]
    lead: LeadVehicleTrack | None
    lead_name: str | None


def grid_geometry(emu: EmulationConfig, ego_d: float) -> tuple[int, float, tuple[float, float]]:
    half = (emu.grid_size - 1) / 2 * emu.resolution
    return emu.grid_size, emu.resolution, (-half, ego_d - half)


def rasterize(footprints: list[Footprint] | tuple[Footprint, ...], size: int, res: float, origin) -> OccupancyGrid:
    """Mark every cell whose center lies within a footprint disc."""
    cells = np.zeros((size, size), dtype=bool)
    ox, oy = origin
    for fp in footprints:
        j0 = max(int(np.floor((fp.x - fp.radius - ox) / res)), 0)
        j1 = min(int(np.ceil((fp.x + fp.radius - ox) / res)), size - 1)
        i0 = max(int(np.floor((fp.y - fp.radius - oy) / res)), 0)
        i1 = min(int(np.ceil((fp.y + fp.radius - oy) / res)), size - 1)
        if j0 > j1 or i0 > i1:
            continue
        cx = ox + res * np.arange(j0, j1 + 1)
        cy = oy + res * np.arange(i0, i1 + 1)
        inside = (cx[None, :] - fp.x) ** 2 + (cy[:, None] - fp.y) ** 2 <= fp.radius**2
        cells[i0 : i1 + 1, j0 : j1 + 1] |= inside
    return OccupancyGrid(cells, res, origin)


def truth_footprints(
    neighbors: tuple[NeighborScript, ...], t: float, ego_s: float, emu: EmulationConfig
) -> list[list[Footprint]]:
    frames = []
    for f in range(emu.frames + 1):
        tf = t + f * emu.frame_period
        frames.append([Footprint(nb.name, float(nb.s(tf)) - ego_s, float(nb.d(tf)), nb.radius) for nb in neighbors])
    return frames


def corrupt(
    frames: list[list[Footprint]], emu: EmulationConfig, rng: np.random.Generator
) -> list[list[Footprint]]:
    """Jitter and drop footprints. Draw order is fixed: per frame, per neighbor."""
    out = []
    for f, fps in enumerate(frames):
        std = emu.jitter * (1 + f)
        p_drop = min(emu.dropout * f, 1.0)
        kept = []
        for fp in fps:
            shift = rng.standard_normal(2) * std
            dropped = rng.random() < p_drop
            if not dropped:
                kept.append(Footprint(fp.name, fp.x + shift[0], fp.y + shift[1], fp.radius))
        out.append(kept)
    return out


def _morph(grid: OccupancyGrid, emu: EmulationConfig) -> OccupancyGrid:
    cells = grid.cells
    if emu.dilate:
        cells = ndimage.binary_dilation(cells, iterations=emu.dilate)
    if emu.erode:
        cells = ndimage.binary_erosion(cells, iterations=emu.erode)
    if cells is grid.cells:
        return grid
    return OccupancyGrid(cells, grid.resolution, grid.origin)


def lead_track(
    footprints: list[list[Footprint]] | tuple[tuple[Footprint, ...], ...],
    emu: EmulationConfig,
    lane_center: float,
    lane_half_width: float,
    times: np.ndarray,
    gate: float,
) -> tuple[LeadVehicleTrack | None, str | None]:
    """Track of the nearest footprint ahead that overlaps the ego lane.

    Positions between observed frames are interpolated linearly; beyond the
    last observation they are extrapolated at the last observed speed.
    """
    candidates: dict[str, list[tuple[float, float]]] = {}
    in_lane: set[str] = set()
    for f, fps in enumerate(footprints):
        for fp in fps:
            candidates.setdefault(fp.name, []).append((f * emu.frame_period, fp.x))
            if abs(fp.y - lane_center) - fp.radius < lane_half_width and fp.x > 0:
                in_lane.add(fp.name)
    best, best_x = None, np.inf
    for name in sorted(in_lane):
        x_first = candidates[name][0][1]
        if 0 < x_first < min(best_x, gate):
            best, best_x = name, x_first
    if best is None:
        return None, None
    obs = np.array(candidates[best])
    tf, xf = obs[:, 0], obs[:, 1]
    x = np.interp(times, tf, xf)
    if len(tf) >= 2:
        v = (xf[-1] - xf[-2]) / (tf[-1] - tf[-2])
        beyond = times > tf[-1]
        x[beyond] = xf[-1] + v * (times[beyond] - tf[-1])
    return LeadVehicleTrack(x), best


def emulate_bev_prediction(
    neighbors: tuple[NeighborScript, ...],
    t: float,
    ego_s: float,
    ego_d: float,
    emu: EmulationConfig,
    rng: np.random.Generator,
    lane_center: float = 0.0,
    lane_half_width: float = 1.75,
    track_times: np.ndarray | None = None,
    lead_gate: float = 50.0,
) -> Perception:
    size, res, origin = grid_geometry(emu, ego_d)
    truth_fp = truth_footprints(neighbors, t, ego_s, emu)
    noisy_fp = corrupt(truth_fp, emu, rng)
    truth = GridSequence(tuple(rasterize(fps, size, res, origin) for fps in truth_fp), emu.frame_period)
    pred = GridSequence(
        tuple(_morph(rasterize(fps, size, res, origin), emu) for fps in noisy_fp), emu.frame_period
    )
    lead, name = (None, None)
    if track_times is not None:
        lead, name = lead_track(noisy_fp, emu, lane_center, lane_half_width, track_times, lead_gate)
    return Perception(pred, truth, tuple(tuple(f) for f in noisy_fp), lead, name)
