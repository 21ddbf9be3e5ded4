import dataclasses
import hashlib
import math
import time

import numpy as np
import pandas as pd
import pytest

from panicsim import (
    ModelParams,
    NonFiniteForce,
    Rect,
    ScenarioSpec,
    Segment,
    SimFrame,
    SimSettings,
    SpawnGroup,
    ValidationFailed,
)
from panicsim.dynamics import desired_speed, drive_forces
from panicsim.emotion import EmotionIncrement, decay_rate, james_lange_rate, update_panic
from panicsim.engine import (
    METRICS_COLUMNS,
    TRAJECTORY_COLUMNS,
    World,
    compute_metrics,
    run,
    step,
)
from panicsim.physiology import StrengthLedger, mechanical_power, update_strength
from panicsim.scenario_io import load_scenario, write_trajectory
from panicsim.utils import closest_on_rect

from .conftest import SCENARIOS, make_agent, open_room


def _with_sim(spec, **changes):
    return dataclasses.replace(spec, sim=dataclasses.replace(spec.sim, **changes))


def _frames_equal(a, b) -> bool:
    return all(
        np.array_equal(getattr(a, name), getattr(b, name))
        for name in ("ids", "pos", "vel", "strength", "panic", "exited")
    )


def test_step_empty_world() -> None:
    world = World.build(open_room())
    frame = SimFrame.from_agents(4, 0.2, [])
    nxt = step(frame, world)
    assert len(nxt) == 0
    assert nxt.tick == 5
    assert nxt.time == pytest.approx(0.25)


def test_agent_next_to_exit_leaves() -> None:
    world = World.build(open_room())
    frame = SimFrame.from_agents(0, 0.0, [make_agent(0, (4.0, 2.5))])
    ledger = StrengthLedger.start(frame.strength)
    while not frame.exited.all() and frame.tick < 100:
        frame = step(frame, world, ledger)
    # 0.75 m to the doorway at 1.3 m/s plus the relaxation time
    assert 12 <= frame.tick <= 32
    assert ledger.consumed[0] > 0

    frozen = step(frame, world, ledger)
    assert _frames_equal(frame, frozen)
    assert frozen.tick == frame.tick + 1


def test_step_reports_non_finite_force() -> None:
    world = World.build(open_room())
    frame = SimFrame.from_agents(
        7, 0.35, [make_agent(0, (1.0, 1.0)), make_agent(5, (3.0, 3.0), vel=(math.nan, 0.0))]
    )
    with pytest.raises(NonFiniteForce, match="agent 5 at tick 7") as e:
        step(frame, world)
    assert (e.value.agent_id, e.value.tick) == (5, 7)


def test_interaction_radius() -> None:
    world = World.build(open_room())
    assert world.interaction_radius(SimFrame.from_agents(0, 0.0, [])) == 2.0
    wide = SimFrame.from_agents(0, 0.0, [make_agent(0, radius=1.0)])
    assert world.interaction_radius(wide) == 2.5


def test_run_is_deterministic(crowd_spec) -> None:
    first = run(crowd_spec)
    second = run(crowd_spec)
    threaded = run(crowd_spec, workers=3)
    assert len(first.frames) == len(second.frames) == len(threaded.frames)
    for a, b, c in zip(first.frames, second.frames, threaded.frames):
        assert _frames_equal(a, b)
        assert _frames_equal(a, c)
    pd.testing.assert_frame_equal(first.metrics_frame(), threaded.metrics_frame())


def test_seed_changes_trajectory(open_room_spec) -> None:
    one = run(_with_sim(open_room_spec, seed=1, max_time=1.0))
    two = run(_with_sim(open_room_spec, seed=2, max_time=1.0))
    assert not np.array_equal(one.final_frame.pos, two.final_frame.pos)


def test_run_rejects_invalid_scenario(minimal_spec) -> None:
    with pytest.raises(ValidationFailed, match="no exits"):
        run(dataclasses.replace(minimal_spec, exits=()))


def test_zero_max_time(minimal_spec) -> None:
    result = run(_with_sim(minimal_spec, max_time=0.0))
    assert len(result.frames) == 1
    assert result.final_frame.tick == 0
    assert result.metrics.evacuation_time == math.inf
    assert not result.metrics.all_exited
    assert len(result.metrics.series) == 1


def test_open_room_empties(open_room_spec) -> None:
    result = run(open_room_spec)
    assert result.metrics.all_exited
    assert result.final_frame.exited.all()
    assert len(result.metrics.exit_times) == 10
    assert result.metrics.evacuation_time == max(result.metrics.exit_times.values())
    assert result.metrics.evacuation_time == pytest.approx(result.final_frame.time)
    assert result.metrics.evacuation_time < 60.0

    ticks = [f.tick for f in result.frames]
    assert all(t % 10 == 0 for t in ticks[:-1])
    assert ticks == sorted(set(ticks))
    series = result.metrics_frame()
    assert list(series.columns) == METRICS_COLUMNS
    assert len(series) == result.final_frame.tick + 1
    assert series["exited"].is_monotonic_increasing
    assert series["exited"].iloc[-1] == 10


def test_trajectory_frame(minimal_spec) -> None:
    result = run(_with_sim(minimal_spec, max_time=0.5, output_every=5))
    table = result.trajectory_frame()
    assert list(table.columns) == TRAJECTORY_COLUMNS
    assert len(table) == 3 * len(result.frames) == 9
    assert table[["t", "id"]].equals(table[["t", "id"]].sort_values(["t", "id"]))
    assert set(table["exited"]) <= {0, 1}


def test_energy_ledger_balances(open_room_spec) -> None:
    result = run(open_room_spec)
    ledger = result.ledger_frame()
    np.testing.assert_allclose(
        ledger["initial_strength"] - ledger["final_strength"],
        ledger["consumed"] - ledger["recovered"],
        atol=1e-6,
    )
    assert (ledger["consumed"] > 0).all()


def test_exhausted_agent_crawls() -> None:
    spec = dataclasses.replace(
        open_room(max_time=30.0),
        groups=(SpawnGroup(1, Rect(1.5, 2.0, 1, 1), strength=(0.0, 0.0)),),
    )
    result = run(spec)
    params = ModelParams()
    for frame in result.frames:
        assert (frame.speed <= params.v_crawl + 1e-9).all()
        assert (frame.strength == 0.0).all()
    assert result.metrics.all_exited


def test_exertion_raises_panic(params) -> None:
    # a walker and a stander, same starting panic, only the exertion coupling active
    dt = 0.05
    mass = np.array([80.0, 80.0])
    goal = np.array([[1.0, 0.0], [0.0, 0.0]])
    vel = np.zeros((2, 2))
    strength = np.full(2, params.S_max)
    panic = np.full(2, 0.2)
    zero = np.zeros(2)
    for k in range(200):
        v_des = desired_speed(np.full(2, 1.4), panic, strength, params)
        drive = drive_forces(mass, vel, goal, v_des, params)
        power = mechanical_power(drive, vel)
        speed = np.hypot(vel[:, 0], vel[:, 1])
        strength, consumed, _ = update_strength(strength, power, speed, dt, params)
        coupling = james_lange_rate(consumed, dt, params)
        inc = EmotionIncrement(zero, zero, coupling, decay_rate(panic, params))
        panic = update_panic(panic, inc, dt)
        vel = vel + drive / mass[:, None] * dt
        if k == 0:
            assert panic[0] == panic[1]
        else:
            assert panic[0] > panic[1]
    assert panic[0] - panic[1] > 0.01
    # frozen anchor, from integrating both agents by hand
    assert panic[0] - panic[1] == pytest.approx(0.021, abs=1e-3)


def test_agents_stay_in_free_space(crowd_spec) -> None:
    result = run(crowd_spec)
    obstacle = crowd_spec.obstacles[0]
    for frame in result.frames:
        r = frame.radius
        assert ((frame.pos >= r[:, None] - 1e-9) & (frame.pos <= 12.0 - r[:, None] + 1e-9)).all()
        _, _, gap = closest_on_rect(frame.pos, obstacle)
        assert (gap >= r - 1e-9).all()
        assert ((frame.panic >= 0) & (frame.panic <= 1)).all()
        assert ((frame.strength >= 0) & (frame.strength <= result.params.S_max)).all()


def test_metrics_examples() -> None:
    frame = SimFrame.from_agents(3, 0.15, [make_agent(0, panic=0.2), make_agent(1, panic=0.4)])
    report = compute_metrics([frame], 5000.0)
    assert report.series["mean_panic"].iloc[0] == pytest.approx(0.3)
    assert report.series["max_panic"].iloc[0] == 0.4
    assert report.series["mean_strength_frac"].iloc[0] == 1.0
    assert report.evacuation_time == math.inf

    later = SimFrame.from_agents(
        200, 10.0, [make_agent(0, panic=0.2, exited=True), make_agent(1, panic=0.4, vel=(1.0, 0.0))]
    )
    last = SimFrame.from_agents(
        246, 12.3, [make_agent(0, exited=True), make_agent(1, exited=True)]
    )
    report = compute_metrics([frame, later, last], 5000.0)
    assert report.evacuation_time == 12.3
    assert report.exit_times == {0: 10.0, 1: 12.3}
    assert report.series["mean_panic"].tolist() == pytest.approx([0.3, 0.4, 0.0])
    assert report.series["mean_speed"].tolist() == [0.0, 1.0, 0.0]
    assert report.series["exited"].tolist() == [0, 1, 2]

    given = compute_metrics([last], 5000.0, exit_times={0: 3.0, 1: 4.5})
    assert given.evacuation_time == 4.5


def test_metrics_edge_cases() -> None:
    with pytest.raises(ValueError, match="At least one frame"):
        compute_metrics([], 5000.0)
    empty = compute_metrics([SimFrame.from_agents(0, 0.0, [])], 5000.0)
    assert empty.evacuation_time == 0.0
    assert empty.series.iloc[0].tolist() == [0.0, 0, 0.0, 0.0, 0.0, 0.0]


@pytest.fixture(scope="module")
def room_run():
    return run(load_scenario(SCENARIOS / "room.txt"))


@pytest.mark.slow
def test_room_energy_books_balance(room_run) -> None:
    assert len(room_run.final_frame) == 200
    assert room_run.final_frame.time <= 60.0
    ledger = room_run.ledger_frame()
    residual = (
        ledger["initial_strength"]
        - ledger["final_strength"]
        - ledger["consumed"]
        + ledger["recovered"]
    )
    assert (residual.abs() <= 1e-9 * ledger["initial_strength"]).all()


@pytest.mark.slow
def test_strength_only_drains_without_recovery(room_run) -> None:
    assert room_run.params.r_rec == 0
    fraction = room_run.metrics_frame()["mean_strength_frac"]
    assert fraction.iloc[0] == 1.0
    assert fraction.is_monotonic_decreasing
    assert fraction.iloc[-1] < 1.0


@pytest.mark.slow
def test_room_trajectory_file_ignores_worker_count(room_run, tmp_path) -> None:
    spec = load_scenario(SCENARIOS / "room.txt")
    assert spec.sim.seed == 42
    digests = []
    for k, result in enumerate((room_run, run(spec, workers=4), run(spec))):
        path = tmp_path / f"trajectory_{k}.csv"
        write_trajectory(result, path)
        digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
    assert digests[0] == digests[1] == digests[2]


@pytest.mark.slow
def test_thousand_agents_run_fast() -> None:
    spec = ScenarioSpec(
        width=40,
        height=40,
        exits=(Segment(40, 12, 40, 28), Segment(0, 12, 0, 28)),
        groups=(SpawnGroup(1000, Rect(2, 2, 36, 36)),),
        sim=SimSettings(dt=0.05, max_time=60.0, seed=7, output_every=1200),
    )
    start = time.perf_counter()
    result = run(spec, workers=4)
    elapsed = time.perf_counter() - start
    assert len(result.final_frame) == 1000
    assert result.final_frame.exited.sum() > 500
    assert elapsed < 10.0


def _narrow_door_times(name: str) -> list[float]:
    spec = load_scenario(SCENARIOS / name)
    return [run(_with_sim(spec, seed=seed)).metrics.evacuation_time for seed in range(1, 6)]


@pytest.mark.slow
def test_panic_does_not_speed_up_a_narrow_door() -> None:
    calm = _narrow_door_times("narrow_door_calm.txt")
    panicked = _narrow_door_times("narrow_door_panic.txt")
    # nobody is left pinned against a door jamb
    assert all(math.isfinite(t) for t in calm), calm
    assert np.mean(panicked) >= 0.9 * np.mean(calm), (calm, panicked)
