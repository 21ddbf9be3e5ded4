import pathlib

import numpy as np
import pytest

from panicsim import AgentState, ModelParams, Rect, ScenarioSpec, Segment, SimSettings, SpawnGroup
from panicsim.scenario_io import load_scenario

SCENARIOS = pathlib.Path(__file__).resolve().parents[1] / "scenarios"


def make_agent(agent_id: int = 0, pos=(1.0, 1.0), vel=(0.0, 0.0), **kwargs) -> AgentState:
    defaults = dict(radius=0.25, mass=70.0, v_pref=1.3, strength=5000.0, panic=0.0)
    defaults.update(kwargs)
    return AgentState(id=agent_id, pos=tuple(pos), vel=tuple(vel), **defaults)


def open_room(width: float = 5.0, height: float = 5.0, count: int = 0, **sim) -> ScenarioSpec:
    """Empty room whose whole east wall is an exit."""
    return ScenarioSpec(
        width=width,
        height=height,
        exits=(Segment(width, 0.0, width, height),),
        groups=(SpawnGroup(count=count, rect=Rect(0.5, 0.5, width / 2, height - 1.0)),)
        if count
        else (),
        sim=SimSettings(**sim),
    )


@pytest.fixture
def params() -> ModelParams:
    return ModelParams()


@pytest.fixture
def minimal_spec(shared_datadir) -> ScenarioSpec:
    return load_scenario(shared_datadir / "minimal.txt")


@pytest.fixture
def open_room_spec(shared_datadir) -> ScenarioSpec:
    return load_scenario(shared_datadir / "open_room.txt")


@pytest.fixture
def crowd_spec(shared_datadir) -> ScenarioSpec:
    return load_scenario(shared_datadir / "crowd.txt")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
