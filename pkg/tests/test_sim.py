import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from uapbev.basis import eval_batch
from uapbev.config import EmulationConfig, PlannerConfig
from uapbev.sim import episode as episode_mod
from uapbev.sim.episode import effective_config, read_trace, run_episode, write_trace
from uapbev.sim.metrics import compute_metrics, jerk_smoothness, longitudinal_gaps
from uapbev.sim.perception import (
    Footprint,
    corrupt,
    emulate_bev_prediction,
    grid_geometry,
    lead_track,
    rasterize,
    truth_footprints,
)
from uapbev.sim.scenario import (
    LaneChange,
    NeighborScript,
    Scenario,
    builtin_scenario,
    load_scenario,
    resolve_scenario,
    scenario_from_dict,
)
from uapbev.optimizer import CandidateRecord
from uapbev.seeding import BehavioralInput
from uapbev.sim.world import EgoKinematics, Plan, WorldState, eval_plan, in_collision, step_world

FAST = {"optimizer.n_bar_s": 30, "optimizer.n_s": 10, "optimizer.n_e": 5, "optimizer.iters": 2}


def nb(name="car", s0=20.0, d0=0.0, knots=((0.0, 0.0),), **kw):
    return NeighborScript(name, s0, d0, np.array(knots, dtype=float), **kw)


# scenarios


@pytest.mark.parametrize("name", ["cutin", "abrupt_stop", "static_block", "overtake"])
def test_builtin_scenarios_load(name):
    sc = builtin_scenario(name)
    assert sc.name == name and sc.route_length > 0 and sc.neighbors


def test_modes_set_lateral_bounds():
    assert builtin_scenario("cutin").lateral_bounds == (-1.75, 1.75)
    assert builtin_scenario("overtake").lateral_bounds == (-1.75, 3.5)


def test_resolve_by_name_and_path(tmp_path):
    p = tmp_path / "road.yaml"
    p.write_text("name: road\nroute_length: 50\n")
    assert resolve_scenario("cutin").name == "cutin"
    assert resolve_scenario(p).name == "road"
    with pytest.raises(FileNotFoundError):
        resolve_scenario("nope")


def test_scenario_validation(tmp_path):
    with pytest.raises(ValueError, match="unknown scenario keys"):
        scenario_from_dict({"route_length": 10, "colour": "red"})
    with pytest.raises(ValueError, match="overlapping"):
        scenario_from_dict({"route_length": 10, "neighbors": [{"s": 1.0}]})
    with pytest.raises(ValueError):
        scenario_from_dict({"route_length": 0})
    with pytest.raises(ValueError):
        scenario_from_dict({"route_length": 10, "mode": "reverse"})
    p = tmp_path / "bad.yaml"
    p.write_text("name: x\n")
    with pytest.raises(ValueError, match="route_length"):
        load_scenario(p)


def test_knot_validation():
    with pytest.raises(ValueError):
        nb(knots=((1.0, 2.0),))
    with pytest.raises(ValueError):
        nb(knots=((0.0, 2.0), (0.0, 3.0)))
    with pytest.raises(ValueError):
        nb(knots=((0.0, -1.0),))
    with pytest.raises(ValueError):
        LaneChange(1.0, 0.0, 0.0)


def test_position_is_integral_of_speed():
    car = nb(knots=((0.0, 8.0), (3.0, 8.0), (4.0, 1.0), (7.0, 1.0), (10.0, 8.0)))
    for t in (0.0, 2.0, 3.5, 4.0, 6.2, 9.99, 14.0):
        want = 20.0 + quad(lambda u: float(car.speed(u)), 0, t, points=[3, 4, 7, 10], limit=200)[0]
        assert car.s(t) == pytest.approx(want, abs=1e-9)


# world stepping


def test_stationary_world_only_advances_time():
    st = WorldState(0.0, EgoKinematics(0.0, 0.0, 0.0, 0.0), (nb(),))
    nxt = step_world(st, 0.1)
    assert nxt.t == pytest.approx(0.1)
    assert nxt.ego == st.ego and not nxt.collision
    assert nb().state(nxt.t) == nb().state(0.0)


def test_neighbor_constant_speed_displacement():
    car = nb(knots=((0.0, 5.0),))
    st = WorldState(0.0, EgoKinematics(0.0, 0.0, 0.0, 0.0), (car,))
    for _ in range(20):
        st = step_world(st, 0.1)
    assert car.s(st.t) - car.s(0.0) == pytest.approx(10.0)


def test_cut_in_starts_at_trigger():
    car = nb(d0=3.5, knots=((0.0, 5.0),), lane_change=LaneChange(3.0, 0.0, 2.0))
    times = np.round(np.arange(0, 61) * 0.1, 10)
    d = car.d(times)
    first_moving = times[np.argmax(d != 3.5)]
    # cosine ramp is flat at its start, so the first changed sample is one step past t = 3
    assert np.all(d[times <= 3.0] == 3.5)
    assert first_moving == pytest.approx(3.1)
    assert car.d(5.0) == pytest.approx(0.0) and car.d(9.0) == 0.0


def test_step_rejects_nonpositive_dt():
    st = WorldState(0.0, EgoKinematics(0.0, 0.0, 0.0, 0.0), ())
    with pytest.raises(ValueError):
        step_world(st, 0.0)


def test_collision_boundary_is_strict():
    ego = EgoKinematics(0.0, 0.0, 0.0, 0.0)
    touching = [{"s": 2.0, "d": 0.0, "radius": 1.0}]
    assert not in_collision(ego, 1.0, touching)
    assert in_collision(ego, 1.0, [{"s": 2.0 - 1e-9, "d": 0.0, "radius": 1.0}])
    # symmetric in the two bodies
    other = EgoKinematics(1.2, 1.1, 0.0, 0.0)
    a = in_collision(ego, 0.9, [{"s": 1.2, "d": 1.1, "radius": 0.7}])
    b = in_collision(other, 0.7, [{"s": 0.0, "d": 0.0, "radius": 0.9}])
    assert a == b


def test_ego_tracks_plan_exactly(basis, rng):
    xi = rng.normal(size=2 * basis.nvar)
    plan = Plan(basis, xi, 100.0, 2.0)
    st = WorldState(2.0, EgoKinematics(100.0, 0.0, 0.0, 0.0), (), plan)
    x, y, vx, vy, ax, ay = (a[0] for a in eval_batch(basis, xi))
    for k in range(1, 5):
        st = step_world(st, 0.1)
        assert st.ego.s == pytest.approx(100.0 + x[k], abs=1e-12)
        assert st.ego.d == pytest.approx(y[k], abs=1e-12)
        assert st.ego.vs == pytest.approx(vx[k], abs=1e-12)


def test_plan_holds_velocity_past_horizon(basis, rng):
    xi = rng.normal(size=2 * basis.nvar)
    plan = Plan(basis, xi, 0.0, 0.0)
    end = eval_plan(plan, 3.0)
    late = eval_plan(plan, 4.0)
    assert late.s == pytest.approx(end.s + end.vs)
    assert late.d == pytest.approx(end.d + end.vd)


# perception


def test_zero_noise_is_bit_identical(rng):
    emu = EmulationConfig(jitter=0.0, dropout=0.0)
    sc = builtin_scenario("cutin")
    perc = emulate_bev_prediction(sc.neighbors, 1.0, 3.0, 0.0, emu, rng)
    for p, t in zip(perc.predicted.grids, perc.truth.grids):
        assert p.cells.tobytes() == t.cells.tobytes()
    assert perc.truth.grids[0].cells.any()


def test_full_dropout_keeps_frame_zero(rng):
    emu = EmulationConfig(jitter=0.0, dropout=1.0)
    perc = emulate_bev_prediction(builtin_scenario("abrupt_stop").neighbors, 0.0, 0.0, 0.0, emu, rng)
    assert perc.predicted.grids[0].cells.tobytes() == perc.truth.grids[0].cells.tobytes()
    assert not any(g.cells.any() for g in perc.predicted.grids[1:])


def test_jitter_std_recovered_from_grids(rng):
    emu = EmulationConfig(jitter=0.1, dropout=0.0)
    size, res, origin = grid_geometry(emu, 0.0)
    frames = [[Footprint("a", 6.0, 0.0, 1.0)] for _ in range(emu.frames + 1)]
    xs = np.arange(size) * res + origin[0]
    ys = np.arange(size) * res + origin[1]
    disp = [[] for _ in frames]
    for _ in range(1000):
        for f, fps in enumerate(corrupt(frames, emu, rng)):
            cells = rasterize(fps, size, res, origin).cells
            i, j = np.nonzero(cells)
            disp[f].append((xs[j].mean() - 6.0, ys[i].mean()))
    for f, d in enumerate(disp):
        std = np.std(np.array(d), axis=0)
        assert np.all(np.abs(std / (0.1 * (1 + f)) - 1) <= 0.15), (f, std)


def test_truth_footprints_are_ego_relative():
    car = nb(s0=30.0, d0=1.0, knots=((0.0, 4.0),))
    frames = truth_footprints((car,), 2.0, 25.0, EmulationConfig())
    assert [fp[0].x for fp in frames] == pytest.approx([38 - 25 + 2 * f for f in range(5)])
    assert all(fp[0].y == 1.0 for fp in frames)


def test_lead_track_picks_nearest_in_lane(basis):
    emu = EmulationConfig()
    frames = [
        [Footprint("far", 30.0 + f, 0.0, 1.0), Footprint("near", 12.0 + 2 * f, 0.5, 1.0), Footprint("side", 5.0, 3.5, 1.0)]
        for f in range(5)
    ]
    track, name = lead_track(frames, emu, 0.0, 1.75, basis.times, gate=50.0)
    assert name == "near"
    # 2 m per 0.5 s frame
    np.testing.assert_allclose(track.x_o, 12.0 + 4.0 * basis.times)
    assert lead_track(frames, emu, 0.0, 1.75, basis.times, gate=10.0) == (None, None)


# metrics


def record(t, s, a=(0.0, 0.0), collision_event=False, neighbors=(), **kw):
    return {"t": t, "ego": {"s": s, "d": 0.0, "as": a[0], "ad": a[1]}, "neighbors": list(neighbors),
            "collision": collision_event, "collision_event": collision_event, **kw}


def test_collisions_per_km():
    tr = [record(0.0, 0.0), record(1.0, 250.0, collision_event=True), record(2.0, 500.0, termination="collision")]
    m = compute_metrics(tr, 1000.0)
    assert m.collisions_per_km == pytest.approx(2.0)
    assert not m.route_completed and m.route_completion == pytest.approx(50.0) and math.isnan(m.duration)


def test_route_end_is_full_completion():
    tr = [record(0.0, 0.0), record(10.0, 100.0, termination="completed")]
    m = compute_metrics(tr, 100.0)
    assert m.route_completed and m.route_completion == 100.0 and m.duration == 10.0


def test_distance_floor():
    tr = [record(0.0, 5.0, collision_event=True, termination="collision")]
    assert compute_metrics(tr, 100.0).collisions_per_km == pytest.approx(1000.0)
    with pytest.raises(ValueError):
        compute_metrics([], 100.0)


def test_smoothness_examples():
    t = np.arange(0, 5, 0.1)
    assert jerk_smoothness(t, np.column_stack([t, 0 * t])) == pytest.approx(1.0)
    assert jerk_smoothness(t, np.full((len(t), 2), 2.0)) == 0.0
    tr = [record(float(ti), float(ti), a=(float(ti), 0.0)) for ti in t]
    assert compute_metrics(tr, 100.0).smoothness == pytest.approx(1.0)


def test_gaps_only_for_lane_overlapping_leaders():
    nbs = [{"s": 10.0, "d": 0.5, "radius": 1.0}, {"s": 5.0, "d": 3.5, "radius": 1.0}, {"s": -3.0, "d": 0.0, "radius": 1.0}]
    assert longitudinal_gaps(0.0, 0.0, 1.0, nbs) == [10.0]


# episodes


def test_empty_road_completes():
    sc = scenario_from_dict({"name": "empty", "route_length": 60.0})
    m, trace = run_episode(sc, PlannerConfig(), "uap", 0, overrides=FAST)
    assert m.route_completed and m.collisions == 0 and math.isfinite(m.smoothness)
    assert trace[-1]["termination"] == "completed"
    assert sum(1 for r in trace if r.get("replan")) >= 1


def test_static_block_barrier_keeps_gap():
    sc = builtin_scenario("static_block")
    m, trace = run_episode(sc, PlannerConfig(), "uap", 0)
    assert m.collisions == 0
    speeds = [math.hypot(r["ego"]["vs"], r["ego"]["vd"]) for r in trace]
    assert min(speeds) < 0.5
    assert m.min_gap >= PlannerConfig().limits.s_min - 0.1


def test_trace_round_trip_recomputes_metrics(tmp_path):
    sc = builtin_scenario("cutin")
    path = tmp_path / "t.jsonl"
    m, trace = run_episode(sc, PlannerConfig(), "single-pass", 3, trace_path=path, overrides=FAST)
    again = compute_metrics(read_trace(path), sc.route_length, PlannerConfig().ego_radius)
    assert json.dumps(again.as_row()) == json.dumps(m.as_row())


def test_episode_is_deterministic():
    sc = builtin_scenario("abrupt_stop")
    a = run_episode(sc, PlannerConfig(), "uap", 5, overrides=FAST)[1]
    b = run_episode(sc, PlannerConfig(), "uap", 5, overrides=FAST)[1]
    assert json.dumps(a) == json.dumps(b)
    c = run_episode(sc, PlannerConfig(), "uap", 6, overrides=FAST)[1]
    assert json.dumps(a) != json.dumps(c)


def test_replan_records_carry_calibration_columns():
    sc = builtin_scenario("cutin")
    _, trace = run_episode(sc, PlannerConfig(), "uap", 0, overrides=FAST)
    rep = [r for r in trace if r.get("replan")]
    assert rep and all(len(r["d_pred"]) == len(r["d_gt"]) == 5 for r in rep)
    assert all({"c_a", "c_bev", "residual", "total"} <= r.keys() for r in rep)


def test_stuck_detection(monkeypatch, basis):
    # a planner that always holds position
    def hold(scene, cfg, seed, dist):
        rec = CandidateRecord(0, BehavioralInput(0.0, 0.0), np.zeros(2 * basis.nvar), np.zeros(2 * basis.nvar), 0.0, True, 0.0, 0.0)
        return rec, [], dist

    monkeypatch.setattr(episode_mod, "optimize_with_posterior", hold)
    sc = scenario_from_dict({"route_length": 100.0, "ego": {"speed": 0.0}})
    m, trace = run_episode(sc, PlannerConfig(), "uap", 0, overrides={"stuck_time": 2.0})
    assert m.termination == "stuck" and not m.route_completed
    # below the speed threshold from the first step, flagged once more than 2 s has passed
    assert trace[-1]["t"] == pytest.approx(2.2)


def test_timeout():
    sc = scenario_from_dict({"route_length": 500.0})
    m, _ = run_episode(sc, PlannerConfig(), "uap", 0, overrides={**FAST, "timeout": 2.0})
    assert m.termination == "timeout"
    assert m.route_completion < 100


def test_planner_failure_is_recorded(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(episode_mod, "optimize_with_posterior", boom)
    m, trace = run_episode(builtin_scenario("cutin"), PlannerConfig(), "uap", 0)
    assert m.termination == "planner_failure"
    assert trace[-1]["error"] == "solver exploded"


def test_unknown_variant():
    with pytest.raises(ValueError):
        run_episode(builtin_scenario("cutin"), PlannerConfig(), "optimal", 0)


def test_override_precedence():
    sc = scenario_from_dict({"route_length": 10.0, "planner": {"w_bev": 2.0, "lead_gate": 30.0}})
    cfg = effective_config(sc, PlannerConfig(), {"w_bev": 5.0})
    assert cfg.w_bev == 5.0 and cfg.lead_gate == 30.0
    assert effective_config(sc, PlannerConfig()).w_bev == 2.0


def test_write_trace_is_json_lines(tmp_path):
    p = tmp_path / "x.jsonl"
    write_trace([{"t": 0.0}, {"t": 0.1}], p)
    assert [json.loads(s) for s in p.read_text().splitlines()] == [{"t": 0.0}, {"t": 0.1}]
