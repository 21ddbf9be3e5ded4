import dataclasses
import math

import numpy as np
import pytest

from panicsim import (
    PRESETS,
    Hazard,
    ModelParams,
    PlacementError,
    Rect,
    ScenarioSpec,
    Segment,
    SimFrame,
    SimSettings,
    SpawnGroup,
    spawn_agents,
    validate_scenario,
)

from .conftest import make_agent, open_room


def test_params_presets() -> None:
    assert ModelParams.from_preset("default") == ModelParams()
    escape = ModelParams.from_preset("panic-escape")
    assert escape.alpha_p == PRESETS["panic-escape"]["alpha_p"]
    assert escape.tau == ModelParams().tau
    with pytest.raises(KeyError, match="Please use one of: default, panic-escape, exhaustion"):
        ModelParams.from_preset("stampede")


def test_params_overrides() -> None:
    params = ModelParams().with_overrides({"beta": 0, "S_max": 100})
    assert params.beta == 0.0
    assert params.S_max == 100.0
    assert isinstance(params.beta, float)
    with pytest.raises(KeyError, match="speeed"):
        ModelParams().with_overrides({"speeed": 1.0})
    with pytest.raises(dataclasses.FrozenInstanceError):
        params.beta = 1.0


def test_params_problems() -> None:
    assert ModelParams().problems() == []
    assert ModelParams(tau=0).problems() == ["params.tau must be > 0"]
    assert ModelParams(beta=-1).problems() == ["params.beta must be >= 0"]
    assert "params.v_crawl must be < params.v_phys" in ModelParams(v_crawl=3.0).problems()
    assert "params.v_phys must be <= params.v_hard" in ModelParams(v_phys=6.0).problems()


def test_hazard_defaults_to_params(params) -> None:
    assert Hazard(1, 2).resolve(params) == (1, 2, 0.5, 2.0)
    assert Hazard(1, 2, A_h=3.0).resolve(params) == (1, 2, 3.0, 2.0)
    spec = dataclasses.replace(open_room(), hazards=(Hazard(1, 2), Hazard(3, 4, 1.0, 0.5)))
    np.testing.assert_array_equal(
        spec.resolved_hazards(), np.array([[1, 2, 0.5, 2.0], [3, 4, 1.0, 0.5]])
    )
    assert open_room().resolved_hazards().shape == (0, 4)


def test_tick_count() -> None:
    assert SimSettings(dt=0.1, max_time=1.0).n_ticks == 10
    assert SimSettings(dt=0.1, max_time=0.3).n_ticks == 3
    assert SimSettings(dt=0.05, max_time=0.0).n_ticks == 0
    assert SimSettings(dt=0.4, max_time=1.0).n_ticks == 2


def test_validate_minimal(minimal_spec) -> None:
    report = validate_scenario(minimal_spec)
    assert report.ok
    assert report.warnings == []
    assert str(report) == "ok"


def test_validate_errors() -> None:
    room = open_room(count=3)
    assert "no exits" in validate_scenario(dataclasses.replace(room, exits=())).errors

    bad_dt = dataclasses.replace(room, sim=SimSettings(dt=-0.1))
    assert "sim.dt must be > 0" in validate_scenario(bad_dt).errors

    outside = dataclasses.replace(room, obstacles=(Rect(4, 4, 2, 2),))
    assert "obstacle 0: lies outside the domain" in validate_scenario(outside).errors

    overlap = dataclasses.replace(room, obstacles=(Rect(1, 1, 1, 1),))
    assert "group 0: spawn rectangle overlaps obstacle 0" in validate_scenario(overlap).errors

    through = dataclasses.replace(
        room,
        obstacles=(Rect(3, 2, 1, 1),),
        exits=(Segment(3.5, 0, 3.5, 5),),
        groups=(SpawnGroup(3, Rect(0.5, 0.5, 2, 2)),),
    )
    assert "exit 0: segment intersects obstacle 0" in validate_scenario(through).errors

    ranges = dataclasses.replace(
        room, groups=(SpawnGroup(3, Rect(0.5, 0.5, 2, 2), panic=(0.5, 0.2), strength=(0, 2)),)
    )
    errors = validate_scenario(ranges).errors
    assert "group 0: panic range must satisfy lo <= hi" in errors
    assert "group 0: strength range must lie in [0, 1]" in errors

    unknown = dataclasses.replace(room, preset="stampede")
    assert not validate_scenario(unknown).ok

    report = validate_scenario(dataclasses.replace(room, exits=(), sim=SimSettings(dt=0)))
    assert len(report.errors) == 2
    assert str(report) == "error: sim.dt must be > 0\nerror: no exits"


def test_validate_non_finite_numbers() -> None:
    room = open_room(count=3)
    wide = dataclasses.replace(room, width=math.inf)
    assert validate_scenario(wide).errors == ["domain width, height and cell_size must be finite"]

    hazard = dataclasses.replace(room, hazards=(Hazard(math.nan, 2.0), Hazard(1, 1, A_h=math.inf)))
    errors = validate_scenario(hazard).errors
    assert "hazard 0: position must be finite" in errors
    assert "hazard 1: A_h must be finite and >= 0" in errors

    lam = dataclasses.replace(room, hazards=(Hazard(1, 1, lambda_h=math.nan),))
    assert validate_scenario(lam).errors == ["hazard 0: lambda_h must be finite and > 0"]

    blocks = dataclasses.replace(
        room,
        obstacles=(Rect(1, math.nan, 1, 1),),
        exits=(Segment(5, 0, 5, math.inf),),
    )
    errors = validate_scenario(blocks).errors
    assert "obstacle 0: coordinates must be finite" in errors
    assert "exit 0: coordinates must be finite" in errors

    group = dataclasses.replace(
        room,
        groups=(
            SpawnGroup(3, Rect(0.5, 0.5, math.inf, 2)),
            SpawnGroup(3, Rect(0.5, 0.5, 2, 2), v_pref=(1.2, math.inf)),
        ),
    )
    errors = validate_scenario(group).errors
    assert "group 0: spawn rectangle must be finite" in errors
    assert "group 1: v_pref range must be finite" in errors


def test_validate_unreachable_group() -> None:
    spec = ScenarioSpec(
        width=6,
        height=6,
        obstacles=(Rect(2, 0, 0.5, 6),),
        exits=(Segment(6, 2, 6, 4),),
        groups=(SpawnGroup(2, Rect(0.5, 0.5, 1, 5)), SpawnGroup(2, Rect(3, 0.5, 2, 5))),
    )
    assert validate_scenario(spec).errors == ["group 0: spawn rectangle cannot reach any exit"]


def test_validate_warnings() -> None:
    slow = open_room(count=3, dt=0.3)
    report = validate_scenario(slow)
    assert report.ok
    assert report.warnings == ["dt exceeds tau/2"]

    crowded = dataclasses.replace(open_room(count=20, dt=0.2), params={"beta": 2.0})
    assert any("contagion" in w for w in validate_scenario(crowded).warnings)


def test_spawn_is_seeded(minimal_spec) -> None:
    first = spawn_agents(minimal_spec)
    assert first == spawn_agents(minimal_spec)
    assert first == spawn_agents(minimal_spec, seed=minimal_spec.sim.seed)
    assert first != spawn_agents(minimal_spec, seed=1)


def test_spawn_respects_geometry_and_ranges() -> None:
    spec = ScenarioSpec(
        width=10,
        height=10,
        obstacles=(Rect(4, 4, 1, 1),),
        exits=(Segment(10, 4, 10, 6),),
        groups=(
            SpawnGroup(40, Rect(0, 0, 10, 4), radius=(0.2, 0.3), strength=(0.5, 0.8)),
            SpawnGroup(10, Rect(0, 6, 10, 4), panic=(0.2, 0.4), mass=(50, 50)),
        ),
        sim=SimSettings(seed=11),
    )
    agents = spawn_agents(spec)
    assert [a.id for a in agents] == list(range(50))
    pos = np.array([a.pos for a in agents])
    radius = np.array([a.radius for a in agents])
    assert ((pos >= radius[:, None]) & (pos <= 10 - radius[:, None])).all()
    gap = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(gap, np.inf)
    assert (gap >= radius[:, None] + radius[None, :]).all()
    assert all(0.2 <= a.radius <= 0.3 and 2500 <= a.strength <= 4000 for a in agents[:40])
    assert all(0.2 <= a.panic <= 0.4 and a.mass == 50 for a in agents[40:])
    assert all(a.vel == (0.0, 0.0) and not a.exited for a in agents)


def test_spawn_too_crowded() -> None:
    spec = dataclasses.replace(
        open_room(), groups=(SpawnGroup(30, Rect(1, 1, 1, 1), radius=(0.3, 0.3)),)
    )
    with pytest.raises(PlacementError, match="of group 0") as e:
        spawn_agents(spec)
    assert e.value.group == 0


def test_frame_columns_are_read_only() -> None:
    frame = SimFrame.from_agents(0, 0.0, [make_agent(1, (2, 2)), make_agent(0, (1, 1))])
    assert frame.ids.tolist() == [0, 1]
    assert frame.agents[1] == make_agent(1, (2.0, 2.0))
    with pytest.raises(ValueError):
        frame.pos[0, 0] = 5.0
    empty = SimFrame.from_agents(3, 0.15, [])
    assert len(empty) == 0
    assert empty.pos.shape == (0, 2)
