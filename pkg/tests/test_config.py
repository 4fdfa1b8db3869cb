import pytest

from uapbev.config import (
    PlannerConfig,
    apply_overrides,
    config_to_dict,
    load_planner_config,
    parse_overrides,
)


def test_defaults():
    cfg = PlannerConfig()
    assert (cfg.basis.segment_count, cfg.basis.steps_per_segment, cfg.basis.dt) == (6, 5, 0.1)
    assert (cfg.optimizer.n_bar_s, cfg.optimizer.n_s, cfg.optimizer.n_e) == (100, 30, 10)
    assert cfg.emulation.grid_size == 200 and cfg.emulation.resolution == 0.2 and cfg.emulation.frames == 4
    assert cfg.kernel.sample_count == 100 and cfg.stuck_time == 10.0 and cfg.replan_period == 0.5


def test_dotted_overrides_coerce_strings():
    cfg = apply_overrides(PlannerConfig(), parse_overrides(["optimizer.iters=3", "limits.s_min=5", "warm_start=false"]))
    assert cfg.optimizer.iters == 3 and isinstance(cfg.optimizer.iters, int)
    assert cfg.limits.s_min == 5.0 and isinstance(cfg.limits.s_min, float)
    assert cfg.warm_start is False


def test_section_mapping_and_tuple():
    cfg = apply_overrides(PlannerConfig(), {"emulation": {"jitter": 0.3}, "initial_sigma": "[2, 3]"})
    assert cfg.emulation.jitter == 0.3 and cfg.initial_sigma == (2.0, 3.0)


def test_nullable_timeout():
    assert apply_overrides(PlannerConfig(), {"timeout": "30"}).timeout == 30
    assert apply_overrides(PlannerConfig(timeout=5.0), {"timeout": "null"}).timeout is None


@pytest.mark.parametrize(
    "ov, exc",
    [
        ({"nope": 1}, KeyError),
        ({"optimizer.nope": 1}, KeyError),
        ({"w_bev.x": 1}, KeyError),
        ({"warm_start": "yes please"}, ValueError),
        ({"optimizer.iters": "2.5"}, ValueError),
        ({"w_bev": "heavy"}, ValueError),
        ({"optimizer": 3}, ValueError),
        ({"optimizer.n_e": "50"}, ValueError),
        ({"emulation.dropout": "1.5"}, ValueError),
    ],
)
def test_bad_overrides(ov, exc):
    with pytest.raises(exc):
        apply_overrides(PlannerConfig(), ov)


def test_parse_overrides_errors():
    with pytest.raises(ValueError):
        parse_overrides(["novalue"])
    with pytest.raises(ValueError):
        parse_overrides(["=3"])
    assert parse_overrides([" a.b = 1 "]) == {"a.b": "1"}


def test_load_precedence():
    cfg = load_planner_config({"w_bev": 2.0, "lead_gate": 20.0}, {"w_bev": 3.0})
    assert cfg.w_bev == 3.0 and cfg.lead_gate == 20.0


def test_round_trip_through_dict():
    cfg = apply_overrides(PlannerConfig(), {"optimizer.iters": 4, "limits.v_max": 12.0})
    d = config_to_dict(cfg)
    again = apply_overrides(PlannerConfig(), d)
    assert config_to_dict(again) == d
