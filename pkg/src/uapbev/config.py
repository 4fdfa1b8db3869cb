"""Planner configuration with YAML loading and ``KEY=VALUE`` overrides.

Precedence is CLI override > scenario file > built-in defaults. Nested
fields are addressed with dots, e.g. ``optimizer.iters=4`` or
``limits.s_min=5``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Iterable

import yaml

from .optimizer import OptimizerConfig
from .projection import PlannerLimits
from .seeding import CostWeights
from .uncertainty import KernelConfig


@dataclass(frozen=True)
class BasisConfig:
    segment_count: int = 6
    steps_per_segment: int = 5
    dt: float = 0.1


@dataclass(frozen=True)
class EmulationConfig:
    """Synthetic perception.

    Attributes:
        frames: Predicted future frames ``F`` (frames ``0..F`` are produced).
        frame_period: Seconds between predicted frames.
        grid_size: Cells per side of the square ego-centred grid.
        resolution: Meters per cell.
        jitter: Footprint translation std at frame 0; frame ``f`` uses
            ``jitter * (1 + f)`` per axis.
        dropout: Footprint drop probability per frame index; frame ``f`` uses
            ``dropout * f``.
        dilate: Cells of binary dilation applied to predicted footprints.
        erode: Cells of binary erosion applied to predicted footprints.
    """

    frames: int = 4
    frame_period: float = 0.5
    grid_size: int = 200
    resolution: float = 0.2
    jitter: float = 0.1
    dropout: float = 0.05
    dilate: int = 0
    erode: int = 0

    def __post_init__(self) -> None:
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if not 0 <= self.dropout <= 1:
            raise ValueError(f"dropout must be a probability, got {self.dropout}")
        if self.jitter < 0 or self.dilate < 0 or self.erode < 0:
            raise ValueError("jitter, dilate and erode must be non-negative")


@dataclass(frozen=True)
class PlannerConfig:
    """Everything the closed-loop planner reads.

    Attributes:
        replan_period: Seconds of plan executed between replans.
        warm_start: Start each cycle from the previous posterior mean, with the
            covariance reset to ``initial_sigma``.
        initial_sigma: Diagonal of the starting covariance over
            (lateral offset, velocity setpoint).
        w_bev: Weight on the collision cost.
        lead_gate: Longitudinal barrier is built only for a lead closer than
            this many meters.
        stuck_time: Seconds below ``stuck_speed`` before an episode is stuck.
        timeout: Episode time limit in seconds; ``None`` derives one from the
            route length and cruise speed.
        ego_radius: Ego footprint radius in meters.
        barrier: Enable the longitudinal barrier in lane-keeping scenarios.
    """

    basis: BasisConfig = field(default_factory=BasisConfig)
    limits: PlannerLimits = field(default_factory=PlannerLimits)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    emulation: EmulationConfig = field(default_factory=EmulationConfig)
    replan_period: float = 0.5
    warm_start: bool = True
    initial_sigma: tuple[float, float] = (1.0, 4.0)
    w_bev: float = 1.0
    lead_gate: float = 50.0
    stuck_time: float = 10.0
    stuck_speed: float = 0.1
    timeout: float | None = None
    ego_radius: float = 1.0
    barrier: bool = True


def _coerce(value: Any, target_type: Any, current: Any) -> Any:
    if isinstance(value, str):
        value = yaml.safe_load(value)
    if value is None and "None" in str(target_type):
        return None
    if isinstance(current, bool) or target_type in (bool, "bool"):
        if not isinstance(value, bool):
            raise ValueError(f"expected a boolean, got {value!r}")
        return value
    if isinstance(current, tuple) and isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ValueError(f"expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ValueError(f"expected a number, got {value!r}")
        return float(value)
    return value


def apply_overrides(cfg: Any, overrides: dict[str, Any]) -> Any:
    """Return a copy of a (nested) dataclass with dotted-path overrides applied."""
    grouped: dict[str, dict[str, Any]] = {}
    direct: dict[str, Any] = {}
    names = {f.name: f for f in dataclasses.fields(cfg)}
    for key, value in overrides.items():
        head, _, rest = key.partition(".")
        if head not in names:
            raise KeyError(f"unknown config key {key!r}")
        if rest:
            grouped.setdefault(head, {})[rest] = value
        else:
            direct[head] = value
    changes: dict[str, Any] = {}
    for head, value in direct.items():
        current = getattr(cfg, head)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ValueError(f"config section {head!r} needs a mapping")
            changes[head] = apply_overrides(current, value)
        else:
            try:
                changes[head] = _coerce(value, names[head].type, current)
            except ValueError as exc:
                raise ValueError(f"config key {head!r}: {exc}") from None
    for head, sub in grouped.items():
        base = changes.get(head, getattr(cfg, head))
        if not dataclasses.is_dataclass(base):
            raise KeyError(f"config key {head!r} has no sub-keys")
        changes[head] = apply_overrides(base, sub)
    return dataclasses.replace(cfg, **changes)


def parse_overrides(pairs: Iterable[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"override {pair!r} is not KEY=VALUE")
        out[key.strip()] = value.strip()
    return out


def load_planner_config(base: dict[str, Any] | None = None, overrides: dict[str, Any] | None = None) -> PlannerConfig:
    cfg = PlannerConfig()
    if base:
        cfg = apply_overrides(cfg, base)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def config_to_dict(cfg: Any) -> dict[str, Any]:
    return dataclasses.asdict(cfg)
