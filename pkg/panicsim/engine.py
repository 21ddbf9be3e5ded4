"""Fixed-timestep simulation loop, run driver and evacuation metrics."""
import logging
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np
import pandas as pd

from .dynamics import Walls, desired_speed, drive_forces, integrate_arrays, pair_forces, wall_forces
from .emotion import (
    EmotionIncrement,
    contagion_rates,
    decay_rate,
    hazard_rates,
    james_lange_rate,
    update_panic,
)
from .exceptions import NonFiniteForce, ValidationFailed
from .model import (
    ModelParams,
    ScenarioSpec,
    SimFrame,
    SimSettings,
    spawn_agents,
    validate_scenario,
)
from .physiology import StrengthLedger, mechanical_power, update_strength
from .spatial import NavField, SpatialGrid, compute_nav_field
from .utils import segment_distance

logger = logging.getLogger(__name__)

CONTACT_MARGIN = 0.5
EXIT_TOLERANCE = 1e-9
# below this many agents the thread pool only adds overhead
_MIN_CHUNK = 64

TRAJECTORY_COLUMNS = ["t", "id", "x", "y", "vx", "vy", "speed", "panic", "strength", "exited"]
METRICS_COLUMNS = ["t", "exited", "mean_panic", "max_panic", "mean_strength_frac", "mean_speed"]
LEDGER_COLUMNS = ["id", "initial_strength", "final_strength", "consumed", "recovered", "last_power"]


@dataclass(frozen=True)
class World:
    """Everything static during a run: scenario, constants, navigation and walls."""

    spec: ScenarioSpec
    params: ModelParams
    field: NavField
    walls: Walls
    hazards: np.ndarray

    @classmethod
    def build(
        cls,
        spec: ScenarioSpec,
        params: Optional[ModelParams] = None,
        field: Optional[NavField] = None,
    ) -> "World":
        params = params or spec.resolved_params()
        return cls(
            spec=spec,
            params=params,
            field=field if field is not None else compute_nav_field(spec),
            walls=Walls.from_scenario(spec),
            hazards=spec.resolved_hazards(params),
        )

    @property
    def dt(self) -> float:
        return self.spec.sim.dt

    def interaction_radius(self, frame: SimFrame) -> float:
        """Neighbour search radius: ``max(R_contagion, 2 * max radius + 0.5)``."""
        widest = float(frame.radius.max()) if len(frame) else 0.0
        return max(self.params.R_contagion, 2.0 * widest + CONTACT_MARGIN)


@dataclass(frozen=True)
class _Tick:
    rows: np.ndarray
    consumed: np.ndarray
    recovered: np.ndarray
    power: np.ndarray


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    if workers <= 1 or n < 2 * _MIN_CHUNK:
        return [(0, n)]
    size = max(_MIN_CHUNK, -(-n // workers))
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _move(lo, hi, pos, vel, mass, radius, v_des, pairs, world: World, ids):
    """Drive, repulsion and wall forces plus integration for rows ``lo:hi``."""
    params = world.params
    sl = slice(lo, hi)
    rows, cols = pairs
    first, last = np.searchsorted(rows, [lo, hi])
    i, j = rows[first:last], cols[first:last]

    goal = world.field.goal_directions(pos[sl], radius[sl])
    drive = drive_forces(mass[sl], vel[sl], goal, v_des[sl], params)
    repulsion = np.zeros((hi - lo, 2))
    if len(i):
        contact = pair_forces(pos[i], pos[j], vel[i], vel[j], radius[i] + radius[j], ids[i], params)
        np.add.at(repulsion, i - lo, contact)
    walls = wall_forces(pos[sl], vel[sl], radius[sl], ids[sl], world.walls, params)
    total = drive + repulsion + walls
    try:
        new_pos, new_vel = integrate_arrays(
            pos[sl], vel[sl], mass[sl], radius[sl], total, world.dt, params, world.walls
        )
    except NonFiniteForce as exc:
        raise NonFiniteForce(agent_id=int(ids[lo + exc.agent_id])) from None
    return drive, new_pos, new_vel


def _advance(
    frame: SimFrame, world: World, executor: Optional[Executor] = None, workers: int = 1
):
    """Produces frame ``t + 1`` from frame ``t``; every stage reads frame ``t`` only."""
    params, dt = world.params, world.dt
    active = np.flatnonzero(~frame.exited)
    ids = frame.ids[active]
    pos, vel = frame.pos[active], frame.vel[active]
    radius, mass = frame.radius[active], frame.mass[active]
    strength, panic = frame.strength[active], frame.panic[active]

    # 1. neighbour grid
    reach = world.interaction_radius(frame)
    grid = SpatialGrid(ids, pos, reach)
    i, j, d = grid.candidate_pairs(reach)

    # 2./3. forces and integration, parallel over contiguous id ranges
    v_des = desired_speed(frame.v_pref[active], panic, strength, params)
    parts = _chunks(len(active), workers if executor is not None else 1)
    args = (pos, vel, mass, radius, v_des, (i, j), world, ids)
    try:
        if len(parts) == 1:
            results = [_move(0, len(active), *args)]
        else:
            futures = [executor.submit(_move, lo, hi, *args) for lo, hi in parts]
            results = [f.result() for f in futures]
    except NonFiniteForce as exc:
        raise NonFiniteForce(agent_id=exc.agent_id, tick=frame.tick) from None
    drive = np.concatenate([r[0] for r in results]).reshape(-1, 2)
    new_pos = np.concatenate([r[1] for r in results]).reshape(-1, 2)
    new_vel = np.concatenate([r[2] for r in results]).reshape(-1, 2)

    # 4. strength from frame-t drive and velocity
    power = mechanical_power(drive, vel)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    new_strength, consumed, recovered = update_strength(strength, power, speed, dt, params)

    # 5. panic from frame-t panic and this tick's consumption
    inc = EmotionIncrement(
        contagion=contagion_rates(panic, i, j, d, params),
        hazard=hazard_rates(pos, world.hazards, params),
        james_lange=james_lange_rate(consumed, dt, params),
        decay=decay_rate(panic, params),
    )
    new_panic = update_panic(panic, inc, dt)

    # 6. exits
    reached = np.zeros(len(active), dtype=bool)
    for seg in world.spec.exits:
        reached |= segment_distance(new_pos, seg) <= radius + EXIT_TOLERANCE

    columns = {
        "pos": frame.pos.copy(),
        "vel": frame.vel.copy(),
        "strength": frame.strength.copy(),
        "panic": frame.panic.copy(),
        "exited": frame.exited.copy(),
    }
    columns["pos"][active] = new_pos
    columns["vel"][active] = new_vel
    columns["strength"][active] = new_strength
    columns["panic"][active] = new_panic
    columns["exited"][active] = reached

    # 7. clock
    tick = frame.tick + 1
    nxt = SimFrame(
        tick=tick,
        time=tick * dt,
        ids=frame.ids,
        radius=frame.radius,
        mass=frame.mass,
        v_pref=frame.v_pref,
        **columns,
    )
    return nxt, _Tick(rows=active, consumed=consumed, recovered=recovered, power=power)


def step(
    frame: SimFrame,
    world: World,
    ledger: Optional[StrengthLedger] = None,
    executor: Optional[Executor] = None,
    workers: int = 1,
) -> SimFrame:
    """Advances the simulation by one tick.

    Stages run in a fixed order (grid, forces, integration, strength, panic, exits,
    clock) and all of them read the immutable input frame. Exited agents are frozen.

    Args:
        frame: State at tick ``t``.
        world: Static scenario data and model constants.
        ledger: Energy ledger to update with this tick's consumption, if any.
        executor: Thread pool used for the force and integration stages.
        workers: Number of contiguous id ranges handed to ``executor``.

    Returns:
        State at tick ``t + 1``.

    Raises:
        NonFiniteForce: naming the tick and the agent id.
    """
    nxt, record = _advance(frame, world, executor, workers)
    if ledger is not None:
        ledger.record(record.rows, record.consumed, record.recovered, record.power)
    return nxt


@dataclass(frozen=True)
class MetricsReport:
    """Evacuation time, per-tick aggregate series and per-agent exit times.

    ``series`` has the columns ``t, exited, mean_panic, max_panic, mean_strength_frac,
    mean_speed``; ``evacuation_time`` is ``inf`` when not everybody got out.
    """

    evacuation_time: float
    series: pd.DataFrame
    exit_times: dict[int, float] = field(default_factory=dict)

    @property
    def all_exited(self) -> bool:
        return bool(np.isfinite(self.evacuation_time))


def compute_metrics(
    frames: Iterable[SimFrame], s_max: float, exit_times: Optional[dict[int, float]] = None
) -> MetricsReport:
    """Aggregates a sequence of frames into a :class:`MetricsReport`.

    Panic and speed aggregates run over non-exited agents, the strength fraction over
    all agents; aggregates of an empty set are 0. Exit events are read off the exited
    flags unless ``exit_times`` is given.

    Raises:
        ValueError: if ``frames`` is empty.
    """
    rows = []
    derived: dict[int, float] = {}
    population = None
    for frame in frames:
        population = len(frame)
        newly = frame.ids[frame.exited]
        for agent_id in newly:
            derived.setdefault(int(agent_id), frame.time)
        inside = ~frame.exited
        panic = frame.panic[inside]
        speed = frame.speed[inside]
        rows.append(
            (
                frame.time,
                int(frame.exited.sum()),
                float(panic.mean()) if panic.size else 0.0,
                float(panic.max()) if panic.size else 0.0,
                float(frame.strength.mean() / s_max) if population else 0.0,
                float(speed.mean()) if speed.size else 0.0,
            )
        )
    if population is None:
        raise ValueError("At least one frame is required.")

    exit_times = derived if exit_times is None else dict(exit_times)
    if population == 0:
        evacuation_time = 0.0
    elif len(exit_times) == population:
        evacuation_time = max(exit_times.values())
    else:
        evacuation_time = float("inf")
    series = pd.DataFrame(rows, columns=METRICS_COLUMNS)
    return MetricsReport(evacuation_time=evacuation_time, series=series, exit_times=exit_times)


@dataclass(frozen=True)
class SimRun:
    """A completed run: sampled frames, metrics and the per-agent energy ledger."""

    scenario: ScenarioSpec
    params: ModelParams
    frames: tuple[SimFrame, ...]
    metrics: MetricsReport
    ledger: StrengthLedger
    field: Optional[NavField] = None

    @property
    def final_frame(self) -> SimFrame:
        return self.frames[-1]

    def trajectory_frame(self) -> pd.DataFrame:
        """One row per agent per sampled frame, ordered by ``(t, id)``."""
        parts = [
            pd.DataFrame(
                {
                    "t": np.full(len(f), f.time),
                    "id": f.ids,
                    "x": f.pos[:, 0],
                    "y": f.pos[:, 1],
                    "vx": f.vel[:, 0],
                    "vy": f.vel[:, 1],
                    "speed": f.speed,
                    "panic": f.panic,
                    "strength": f.strength,
                    "exited": f.exited.astype(int),
                }
            )
            for f in self.frames
        ]
        if not parts or not sum(len(p) for p in parts):
            return pd.DataFrame(columns=TRAJECTORY_COLUMNS)
        return pd.concat(parts, ignore_index=True)[TRAJECTORY_COLUMNS]

    def metrics_frame(self) -> pd.DataFrame:
        return self.metrics.series.copy()

    def ledger_frame(self) -> pd.DataFrame:
        final = self.final_frame
        return pd.DataFrame(
            {
                "id": final.ids,
                "initial_strength": self.ledger.initial,
                "final_strength": final.strength,
                "consumed": self.ledger.consumed,
                "recovered": self.ledger.recovered,
                "last_power": self.ledger.last_power,
            },
            columns=LEDGER_COLUMNS,
        )


def run(spec: ScenarioSpec, workers: int = 1) -> SimRun:
    """Spawns the population and steps it until everybody exited or time is up.

    Frames are kept every ``output_every`` ticks plus the final one; metrics cover every
    tick.

    Args:
        spec: Scenario including run settings and seed.
        workers: Threads for the per-agent force and integration stages. The result
            does not depend on it.

    Returns:
        The completed run.

    Raises:
        ValidationFailed: if the scenario has validation errors.
        PlacementError: if a spawn group cannot be placed.
        NonFiniteForce: if the integration breaks down.
    """
    report = validate_scenario(spec)
    if not report.ok:
        raise ValidationFailed(report)
    params = spec.resolved_params()
    world = World.build(spec, params)
    agents = spawn_agents(spec)
    first = SimFrame.from_agents(0, 0.0, agents)
    ledger = StrengthLedger.start(first.strength)
    n_ticks = spec.sim.n_ticks
    logger.info("running %d agents for up to %d ticks", len(first), n_ticks)

    sampled: list[SimFrame] = []
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        every = _frames(first, world, ledger, executor, workers, spec.sim, sampled)
        metrics = compute_metrics(every, params.S_max)
    finally:
        if executor is not None:
            executor.shutdown()

    logger.info(
        "run finished at t=%.3f s: %d of %d agents exited, evacuation time %s",
        sampled[-1].time,
        len(metrics.exit_times),
        len(first),
        metrics.evacuation_time,
    )
    return SimRun(
        scenario=spec,
        params=params,
        frames=tuple(sampled),
        metrics=metrics,
        ledger=ledger,
        field=world.field,
    )


def _frames(
    frame: SimFrame,
    world: World,
    ledger: StrengthLedger,
    executor: Optional[Executor],
    workers: int,
    sim: SimSettings,
    sampled: list,
) -> Iterator[SimFrame]:
    n_ticks, output_every = sim.n_ticks, sim.output_every
    sampled.append(frame)
    yield frame
    while frame.tick < n_ticks and not frame.exited.all():
        frame = step(frame, world, ledger, executor, workers)
        if frame.tick % output_every == 0:
            sampled.append(frame)
            logger.debug("tick %d: %d exited", frame.tick, int(frame.exited.sum()))
        yield frame
    if sampled[-1] is not frame:
        sampled.append(frame)
