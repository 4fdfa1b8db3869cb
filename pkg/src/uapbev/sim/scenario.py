"""Scenario description and scripted neighbor motion.

All motion is expressed in road coordinates ``(s, d)``: arc length along the
centerline and signed lateral offset (positive left). Scenario files are
YAML with this schema::

    name: cutin
    mode: inlane            # inlane | overtaking
    route_length: 120.0     # meters
    cruise_speed: 8.0       # m/s
    seed: 0                 # scenario noise seed
    lane_half_width: 1.75
    overtake_bound: 3.5     # upper lateral bound in overtaking mode
    centerline: path.txt    # optional "x y" table, straight road otherwise
    ego: {s: 0.0, d: 0.0, speed: 8.0}
    planner: {...}          # optional planner overrides
    neighbors:
      - name: car1
        s: 20.0
        d: 3.5
        radius: 1.0
        speed: [[0.0, 5.0], [3.0, 5.0], [4.0, 0.0]]   # (t, v) knots
        lane_change: {t: 2.0, target_d: 0.0, duration: 2.0}

Speed is linear between knots and held after the last one, so position is
its exact piecewise-quadratic integral.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

MODES = ("inlane", "overtaking")


@dataclass(frozen=True)
class LaneChange:
    t: float
    target_d: float
    duration: float

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError(f"lane change duration must be positive, got {self.duration}")


@dataclass(frozen=True, eq=False)
class NeighborScript:
    """Scripted vehicle.

    Attributes:
        s0: Initial arc length in meters.
        d0: Initial lateral offset in meters.
        speed_knots: ``(k, 2)`` array of ``(t, v)``; the first knot must be at
            ``t = 0``.
        lane_change: Optional smooth lateral move starting at ``lane_change.t``.
    """

    name: str
    s0: float
    d0: float
    speed_knots: np.ndarray
    radius: float = 1.0
    lane_change: LaneChange | None = None

    def __post_init__(self) -> None:
        knots = np.atleast_2d(np.asarray(self.speed_knots, dtype=float))
        if knots.shape[1] != 2 or knots.shape[0] < 1:
            raise ValueError(f"neighbor {self.name!r}: speed knots must be (t, v) pairs")
        if knots[0, 0] != 0.0 or np.any(np.diff(knots[:, 0]) <= 0):
            raise ValueError(f"neighbor {self.name!r}: knot times must start at 0 and increase")
        if np.any(knots[:, 1] < 0):
            raise ValueError(f"neighbor {self.name!r}: speeds must be non-negative")
        object.__setattr__(self, "speed_knots", knots)

    def speed(self, t: np.ndarray | float) -> np.ndarray:
        k = self.speed_knots
        return np.interp(t, k[:, 0], k[:, 1])

    def s(self, t: np.ndarray | float) -> np.ndarray:
        """Exact integral of the piecewise-linear speed profile."""
        t = np.asarray(t, dtype=float)
        k = self.speed_knots
        tk, vk = k[:, 0], k[:, 1]
        seg_len = np.diff(tk)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vk[:-1] + vk[1:]) * seg_len)])
        i = np.clip(np.searchsorted(tk, t, side="right") - 1, 0, len(tk) - 1)
        slope = np.zeros_like(vk)
        slope[:-1] = np.diff(vk) / seg_len
        tau = t - tk[i]
        return self.s0 + cum[i] + vk[i] * tau + 0.5 * slope[i] * tau**2

    def d(self, t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lc = self.lane_change
        if lc is None:
            return np.full_like(t, self.d0)
        u = np.clip((t - lc.t) / lc.duration, 0.0, 1.0)
        return self.d0 + (lc.target_d - self.d0) * 0.5 * (1.0 - np.cos(np.pi * u))

    def state(self, t: float) -> tuple[float, float]:
        return float(self.s(t)), float(self.d(t))


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    mode: str
    route_length: float
    cruise_speed: float
    ego_s: float
    ego_d: float
    ego_speed: float
    neighbors: tuple[NeighborScript, ...]
    lane_half_width: float = 1.75
    overtake_bound: float = 3.5
    seed: int = 0
    centerline_path: str | None = None
    planner_overrides: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.route_length > 0:
            raise ValueError(f"route_length must be positive, got {self.route_length}")
        if not self.cruise_speed > 0:
            raise ValueError(f"cruise_speed must be positive, got {self.cruise_speed}")
        for nb in self.neighbors:
            gap = np.hypot(nb.s0 - self.ego_s, nb.d0 - self.ego_d)
            if gap < nb.radius + 1.0:
                raise ValueError(f"neighbor {nb.name!r} starts overlapping the ego ({gap:.2f} m apart)")

    @property
    def lateral_bounds(self) -> tuple[float, float]:
        """Lateral limits for the planner; overtaking opens the left side."""
        if self.mode == "overtaking":
            return -self.lane_half_width, self.overtake_bound
        return -self.lane_half_width, self.lane_half_width


def _neighbor_from_dict(raw: dict[str, Any], idx: int) -> NeighborScript:
    name = str(raw.get("name", f"car{idx}"))
    speed = raw.get("speed", 0.0)
    knots = [[0.0, float(speed)]] if np.isscalar(speed) else speed
    lc = raw.get("lane_change")
    return NeighborScript(
        name=name,
        s0=float(raw["s"]),
        d0=float(raw.get("d", 0.0)),
        speed_knots=np.asarray(knots, dtype=float),
        radius=float(raw.get("radius", 1.0)),
        lane_change=None if lc is None else LaneChange(float(lc["t"]), float(lc["target_d"]), float(lc["duration"])),
    )


def scenario_from_dict(raw: dict[str, Any], base_dir: Path | None = None) -> Scenario:
    known = {
        "name", "mode", "route_length", "cruise_speed", "seed", "lane_half_width",
        "overtake_bound", "centerline", "ego", "planner", "neighbors",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    ego = raw.get("ego", {})
    cl = raw.get("centerline")
    if cl is not None and base_dir is not None and not Path(cl).is_absolute():
        cl = str(base_dir / cl)
    cruise = float(raw.get("cruise_speed", 8.0))
    return Scenario(
        name=str(raw.get("name", "scenario")),
        mode=str(raw.get("mode", "inlane")).lower(),
        route_length=float(raw["route_length"]),
        cruise_speed=cruise,
        ego_s=float(ego.get("s", 0.0)),
        ego_d=float(ego.get("d", 0.0)),
        ego_speed=float(ego.get("speed", cruise)),
        neighbors=tuple(_neighbor_from_dict(n, i) for i, n in enumerate(raw.get("neighbors", []) or [])),
        lane_half_width=float(raw.get("lane_half_width", 1.75)),
        overtake_bound=float(raw.get("overtake_bound", 3.5)),
        seed=int(raw.get("seed", 0)),
        centerline_path=cl,
        planner_overrides=dict(raw.get("planner", {}) or {}),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    raw = yaml.safe_load(path.read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: scenario file must be a mapping")
    if "route_length" not in raw:
        raise ValueError(f"{path}: missing required key 'route_length'")
    return scenario_from_dict(raw, path.parent)


BUILTIN_DIR = Path(__file__).resolve().parent / "scenarios"


def builtin_scenario(name: str) -> Scenario:
    path = BUILTIN_DIR / f"{name}.yaml"
    if not path.exists():
        available = sorted(p.stem for p in BUILTIN_DIR.glob("*.yaml"))
        raise FileNotFoundError(f"no built-in scenario {name!r}; available: {available}")
    return load_scenario(path)


def resolve_scenario(ref: str | Path) -> Scenario:
    """A path to a YAML file, or the name of a built-in scenario."""
    p = Path(ref)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return load_scenario(p)
    return builtin_scenario(str(ref))
