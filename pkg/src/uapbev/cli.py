"""Command-line entry point.

Subcommands:
    run              scenarios x variants x seeds; metrics CSV, traces, summary
    calibrate-noise  fit a per-step distance-error model from traces
    ablate-barrier   {uncertainty on/off} x {barrier on/off} on lane-keeping scenarios
    validate-config  print the effective config or fail on a bad key

Every error exits nonzero with a single line starting with ``uapbev: error:``.
The log level comes from the ``UAPBEV_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .config import PlannerConfig, apply_overrides, config_to_dict, parse_overrides
from .sim.episode import VARIANTS, effective_config, observations_from_trace, read_trace, run_episode, write_trace
from .sim.metrics import EpisodeMetrics
from .sim.scenario import Scenario, resolve_scenario
from .uncertainty import fit_error_model

ERROR_PREFIX = "uapbev: error:"
METRIC_FIELDS = [f.name for f in fields(EpisodeMetrics)]

logger = logging.getLogger("uapbev")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        usage = " ".join(self.format_usage().split())
        raise CliError(f"{message} ({usage})")


@dataclass(frozen=True)
class EpisodeJob:
    scenario: Scenario
    variant: str
    seed: int
    overrides: dict


def parse_seeds(text: str) -> list[int]:
    """``"0-4"``, ``"1,3,7"`` or a mix like ``"0-2,9"``; ranges are inclusive."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise CliError(f"seed range {part!r} is descending")
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise CliError(f"bad seed range {part!r}") from None
    if not seeds:
        raise CliError("no seeds given")
    return seeds


def _split_list(values: Sequence[str] | None) -> list[str]:
    return [v.strip() for item in values or () for v in item.split(",") if v.strip()]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _load_scenarios(refs: Sequence[str]) -> list[Scenario]:
    out = []
    for ref in refs:
        try:
            out.append(resolve_scenario(ref))
        except (OSError, KeyError, ValueError, yaml.YAMLError) as exc:
            raise CliError(f"cannot load scenario {ref!r}: {exc}") from None
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise CliError(f"duplicate scenario names: {names}")
    return out


def _overrides(pairs: Sequence[str] | None) -> dict:
    try:
        return parse_overrides(pairs or ())
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _effective(scenario: Scenario, overrides: dict) -> PlannerConfig:
    try:
        return effective_config(scenario, PlannerConfig(), overrides)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(f"config for scenario {scenario.name!r}: {exc}") from None


def _config_yaml(configs: dict[str, PlannerConfig]) -> str:
    # json round trip turns tuples into lists so safe_dump accepts them
    plain = json.loads(json.dumps({k: config_to_dict(v) for k, v in configs.items()}))
    return yaml.safe_dump(plain, sort_keys=True)


def _run_job(job: EpisodeJob) -> tuple[EpisodeMetrics, list[dict]]:
    return run_episode(job.scenario, PlannerConfig(), job.variant, job.seed, overrides=job.overrides)


def _execute(jobs: list[EpisodeJob], n_jobs: int):
    """Yield results in job order; episodes run in worker processes when ``n_jobs > 1``."""
    if n_jobs <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield job, _run_job(job)
        return
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        yield from zip(jobs, pool.map(_run_job, jobs))


def _trace_name(job: EpisodeJob, tag: str | None = None) -> str:
    label = job.variant if tag is None else tag
    return f"{job.scenario.name}__{label}__seed{job.seed}.jsonl"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _mean(values: list[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


SUMMARY_HEADER = [
    "group",
    "episodes",
    "collision_episodes",
    "collisions_per_km",
    "route_completion",
    "duration",
    "smoothness",
    "min_gap",
]


def summarize(group: str, metrics: list[EpisodeMetrics]) -> list:
    """One summary row: means over episodes, duration over completed routes only."""
    return [
        group,
        len(metrics),
        sum(1 for m in metrics if m.collisions > 0),
        _mean([m.collisions_per_km for m in metrics]),
        _mean([m.route_completion for m in metrics]),
        _mean([m.duration for m in metrics if m.route_completed]),
        _mean([m.smoothness for m in metrics]),
        min((m.min_gap for m in metrics), default=math.inf),
    ]


def _text_table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[f"{v:.3f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def _prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        (out / "traces").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from None
    return out


def _episode_rows(results: list[tuple[EpisodeJob, EpisodeMetrics]]) -> list[list]:
    rows = []
    for job, m in results:
        r = m.as_row()
        rows.append([job.scenario.name, job.variant, job.seed, *(r[f] for f in METRIC_FIELDS)])
    return rows


def cmd_run(args: argparse.Namespace) -> int:
    variants = _split_list(args.variant)
    if not variants:
        raise CliError("no variants given; pass --variant uap|deterministic|single-pass")
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise CliError(f"unknown variant(s) {bad}; expected {list(VARIANTS)}")
    refs = _split_list(args.scenario)
    if not refs:
        raise CliError("no scenarios given; pass --scenario NAME_OR_PATH")
    seeds = parse_seeds(args.seeds)
    scenarios = _load_scenarios(refs)
    overrides = _overrides(args.config)
    configs = {sc.name: _effective(sc, overrides) for sc in scenarios}
    out = _prepare_out(args.out)
    (out / "effective_config.yaml").write_text(_config_yaml(configs))

    jobs = [EpisodeJob(sc, v, s, overrides) for sc in scenarios for v in variants for s in seeds]
    results = []
    for job, (metrics, trace) in _execute(jobs, args.jobs):
        write_trace(trace, out / "traces" / _trace_name(job))
        results.append((job, metrics))
        logger.info("%s %s seed %d: %s", job.scenario.name, job.variant, job.seed, metrics.termination)

    _write_csv(out / "metrics.csv", ["scenario", "variant", "seed", *METRIC_FIELDS], _episode_rows(results))
    summary = []
    for sc in scenarios:
        for v in variants:
            group = [m for j, m in results if j.scenario.name == sc.name and j.variant == v]
            summary.append(summarize(f"{sc.name}/{v}", group))
    for v in variants:
        summary.append(summarize(f"all/{v}", [m for j, m in results if j.variant == v]))
    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary)
    (out / "summary.txt").write_text(_text_table(SUMMARY_HEADER, summary))
    sys.stdout.write(_text_table(SUMMARY_HEADER, summary))
    return 0


def _trace_files(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("*.jsonl")))
        elif p.exists():
            files.append(p)
        else:
            raise CliError(f"trace path {p} does not exist")
    if not files:
        raise CliError("no trace files found")
    return files


def cmd_calibrate_noise(args: argparse.Namespace) -> int:
    observations = []
    for path in _trace_files(args.traces):
        try:
            trace = read_trace(path)
            observations.extend(observations_from_trace(trace))
        except KeyError as exc:
            raise CliError(f"{path}: schema error: {exc.args[0]}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"{path}: cannot read trace: {exc}") from None
    try:
        model = fit_error_model(observations, args.mode)
    except ValueError as exc:
        raise CliError(f"insufficient observations: {exc}") from None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        model.save(out / "error_model.txt")
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}") from None
    counts = np.bincount([k for k, _, _ in observations], minlength=model.steps)
    rows = [[k, float(model.mu[k]), float(model.sigma[k]), int(counts[k])] for k in range(model.steps)]
    _write_csv(out / "noise_profile.csv", ["k", "mu", "sigma", "count"], rows)
    sys.stdout.write(_text_table(["k", "mu", "sigma", "count"], rows))
    return 0


ABLATION = [
    ("on", "on", "uap", True),
    ("on", "off", "uap", False),
    ("off", "on", "deterministic", True),
    ("off", "off", "deterministic", False),
]


def cmd_ablate_barrier(args: argparse.Namespace) -> int:
    refs = _split_list(args.scenario)
    if not refs:
        raise CliError("no scenarios given; pass --scenario NAME_OR_PATH")
    scenarios = _load_scenarios(refs)
    not_inlane = [s.name for s in scenarios if s.mode != "inlane"]
    if not_inlane:
        raise CliError(f"barrier ablation needs lane-keeping scenarios; got {not_inlane}")
    seeds = parse_seeds(args.seeds)
    base = _overrides(args.config)
    out = _prepare_out(args.out)
    configs = {}
    jobs = []
    for unc, bar, variant, barrier in ABLATION:
        ov = {**base, "barrier": barrier}
        for sc in scenarios:
            configs[f"{sc.name}/uncertainty-{unc}/barrier-{bar}"] = _effective(sc, ov)
            jobs.extend(EpisodeJob(sc, variant, s, ov) for s in seeds)
    (out / "effective_config.yaml").write_text(_config_yaml(configs))

    results = []
    for job, (metrics, trace) in _execute(jobs, args.jobs):
        tag = f"{job.variant}-barrier-{'on' if job.overrides['barrier'] else 'off'}"
        write_trace(trace, out / "traces" / _trace_name(job, tag))
        results.append((job, metrics))
    rows = []
    for job, m in results:
        r = m.as_row()
        rows.append([job.scenario.name, job.variant, job.overrides["barrier"], job.seed, *(r[f] for f in METRIC_FIELDS)])
    _write_csv(out / "metrics.csv", ["scenario", "variant", "barrier", "seed", *METRIC_FIELDS], rows)

    header = ["uncertainty", "barrier", *SUMMARY_HEADER[1:]]
    summary = []
    for unc, bar, variant, barrier in ABLATION:
        group = [m for j, m in results if j.variant == variant and j.overrides["barrier"] == barrier]
        summary.append([unc, bar, *summarize("", group)[1:]])
    _write_csv(out / "ablation.csv", header, summary)
    (out / "ablation.txt").write_text(_text_table(header, summary))
    sys.stdout.write(_text_table(header, summary))
    return 0


def cmd_validate_config(args: argparse.Namespace) -> int:
    overrides = _overrides(args.config)
    refs = _split_list(args.scenario)
    if refs:
        configs = {sc.name: _effective(sc, overrides) for sc in _load_scenarios(refs)}
    else:
        try:
            configs = {"default": apply_overrides(PlannerConfig(), overrides)}
        except (KeyError, ValueError, TypeError) as exc:
            raise CliError(f"config: {exc}") from None
    sys.stdout.write(_config_yaml(configs))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uapbev", description="Uncertainty-aware sampling planner on synthetic BEV predictions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, seeds: bool = True) -> None:
        p.add_argument("--scenario", action="append", help="built-in name or YAML path; repeat or comma-separate")
        p.add_argument("--config", action="append", metavar="KEY=VALUE", help="dotted config override; repeatable")
        if seeds:
            p.add_argument("--seeds", default="0", help="e.g. 0-19 or 1,4,9 (inclusive ranges)")
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--jobs", type=int, default=1, help="episodes run in parallel")

    p_run = sub.add_parser("run", help="run scenarios x variants x seeds")
    common(p_run)
    p_run.add_argument("--variant", action="append", help="uap, deterministic or single-pass; repeat or comma-separate")
    p_run.set_defaults(func=cmd_run)

    p_cal = sub.add_parser("calibrate-noise", help="fit a distance-error model from trace files")
    p_cal.add_argument("traces", nargs="+", help="trace files or directories of *.jsonl")
    p_cal.add_argument("--out", required=True, help="output directory")
    p_cal.add_argument("--mode", choices=("gaussian", "empirical"), default="gaussian")
    p_cal.set_defaults(func=cmd_calibrate_noise)

    p_abl = sub.add_parser("ablate-barrier", help="uncertainty on/off x barrier on/off")
    common(p_abl)
    p_abl.set_defaults(func=cmd_ablate_barrier)

    p_val = sub.add_parser("validate-config", help="print the effective configuration")
    common(p_val, seeds=False)
    p_val.set_defaults(func=cmd_validate_config)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("UAPBEV_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise CliError(f"UAPBEV_LOG={level!r} is not a log level")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise CliError(f"--jobs must be >= 1, got {args.jobs}")
        return args.func(args)
    except CliError as exc:
        print(f"{ERROR_PREFIX} {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{ERROR_PREFIX} {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
