"""Domain types, model constants and scenario validation shared by every module."""
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import PlacementError
from .spatial import build_nav_field, unreachable_groups
from .utils import closest_on_rect, rect_inside, rects_overlap, segment_hits_rect_interior

logger = logging.getLogger(__name__)

MAX_PLACEMENT_ATTEMPTS = 10000
_PLACEMENT_BATCH = 100
_HEX_PACKING_DENSITY = 0.9069
_BOUNDARY_TOL = 1e-9
_U64_MAX = 2**64 - 1


class Rect(NamedTuple):
    """Axis-aligned rectangle, ``(x, y)`` is the lower-left corner. Meters."""

    x: float
    y: float
    w: float
    h: float


class Segment(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)


@dataclass(frozen=True)
class AgentState:
    """Kinematic, physiological and emotional state of one agent.

    ``strength`` is the remaining reserve in joules and ``panic`` the dimensionless
    fear intensity in ``[0, 1]``. Exited agents keep their last state.
    """

    id: int
    pos: tuple[float, float]
    vel: tuple[float, float]
    radius: float
    mass: float
    v_pref: float
    strength: float
    panic: float
    exited: bool = False


@dataclass(frozen=True)
class ModelParams:
    """Every constant of the force, fatigue, contagion and coupling model (SI units)."""

    tau: float = 0.5
    A_rep: float = 2000.0
    B_rep: float = 0.08
    k_body: float = 1.2e5
    kappa_fric: float = 2.4e5
    S_max: float = 5000.0
    c_basal: float = 2.0
    r_rec: float = 0.0
    v_rest: float = 0.1
    v_crawl: float = 0.3
    v_phys: float = 3.0
    kappa_fat: float = 0.25
    alpha_p: float = 0.8
    R_contagion: float = 2.0
    beta: float = 0.3
    A_h: float = 0.5
    lambda_h: float = 2.0
    gamma_jl: float = 0.05
    P_ref: float = 200.0
    delta_decay: float = 0.02
    v_hard: float = 5.0

    _POSITIVE = (
        "tau",
        "B_rep",
        "S_max",
        "v_rest",
        "v_crawl",
        "v_phys",
        "v_hard",
        "R_contagion",
        "P_ref",
        "lambda_h",
        "kappa_fat",
    )
    _NON_NEGATIVE = (
        "A_rep",
        "k_body",
        "kappa_fric",
        "c_basal",
        "r_rec",
        "alpha_p",
        "beta",
        "A_h",
        "gamma_jl",
        "delta_decay",
    )

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_preset(cls, name: str) -> "ModelParams":
        try:
            overrides = PRESETS[name]
        except KeyError:
            raise KeyError(
                f"Unknown parameter preset {name!r}. Please use one of: {', '.join(PRESETS)}"
            )
        return cls().with_overrides(overrides)

    def with_overrides(self, overrides: Mapping[str, float]) -> "ModelParams":
        unknown = sorted(set(overrides) - set(self.names()))
        if unknown:
            raise KeyError(f"Unknown model parameter(s): {', '.join(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def problems(self) -> list[str]:
        """Range violations, one message per offending constant."""
        found = []
        for name in self.names():
            if not math.isfinite(getattr(self, name)):
                found.append(f"params.{name} must be finite")
        for name in self._POSITIVE:
            if not getattr(self, name) > 0:
                found.append(f"params.{name} must be > 0")
        for name in self._NON_NEGATIVE:
            if not getattr(self, name) >= 0:
                found.append(f"params.{name} must be >= 0")
        if not self.v_crawl < self.v_phys:
            found.append("params.v_crawl must be < params.v_phys")
        if not self.v_phys <= self.v_hard:
            found.append("params.v_phys must be <= params.v_hard")
        return found

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.names()}


PRESETS: dict[str, dict[str, float]] = {
    "default": {},
    # stronger panic amplification and faster contagion
    "panic-escape": {"alpha_p": 1.5, "beta": 0.5, "v_phys": 4.0, "gamma_jl": 0.1},
    # small reserve, fast drain
    "exhaustion": {"S_max": 500.0, "c_basal": 10.0},
}


class Hazard(NamedTuple):
    """Exogenous panic source; ``A_h``/``lambda_h`` default to the model params."""

    x: float
    y: float
    A_h: Optional[float] = None
    lambda_h: Optional[float] = None

    def resolve(self, params: ModelParams) -> tuple[float, float, float, float]:
        amplitude = params.A_h if self.A_h is None else self.A_h
        length = params.lambda_h if self.lambda_h is None else self.lambda_h
        return (self.x, self.y, amplitude, length)


@dataclass(frozen=True)
class SpawnGroup:
    """``count`` agents spawned in ``rect``; every range is a ``(lo, hi)`` pair.

    ``strength`` is the initial fraction of ``S_max``.
    """

    count: int
    rect: Rect
    v_pref: tuple[float, float] = (1.2, 1.4)
    mass: tuple[float, float] = (60.0, 80.0)
    radius: tuple[float, float] = (0.25, 0.3)
    strength: tuple[float, float] = (1.0, 1.0)
    panic: tuple[float, float] = (0.0, 0.0)

    RANGES = ("v_pref", "mass", "radius", "strength", "panic")


@dataclass(frozen=True)
class SimSettings:
    dt: float = 0.05
    max_time: float = 60.0
    seed: int = 0
    output_every: int = 1

    @property
    def n_ticks(self) -> int:
        """Number of ticks that keeps the final frame time within ``max_time``."""
        return int(math.floor(self.max_time / self.dt + 1e-9))


@dataclass(frozen=True)
class ScenarioSpec:
    """Static world: domain, geometry, exits, hazards, spawn groups and run settings."""

    width: float
    height: float
    cell_size: float = 0.25
    obstacles: tuple[Rect, ...] = ()
    exits: tuple[Segment, ...] = ()
    hazards: tuple[Hazard, ...] = ()
    groups: tuple[SpawnGroup, ...] = ()
    preset: str = "default"
    params: Mapping[str, float] = field(default_factory=dict)
    sim: SimSettings = field(default_factory=SimSettings)

    @property
    def domain(self) -> Rect:
        return Rect(0.0, 0.0, self.width, self.height)

    @property
    def population(self) -> int:
        return sum(g.count for g in self.groups)

    def resolved_params(self) -> ModelParams:
        return ModelParams.from_preset(self.preset).with_overrides(self.params)

    def resolved_hazards(self, params: Optional[ModelParams] = None) -> np.ndarray:
        """Hazards as an ``(k, 4)`` array of ``x, y, A_h, lambda_h``."""
        params = params or self.resolved_params()
        rows = [h.resolve(params) for h in self.hazards]
        return np.array(rows, dtype=float).reshape(-1, 4)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self) -> str:
        lines = [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) if lines else "ok"


@dataclass(frozen=True, eq=False)
class SimFrame:
    """Immutable snapshot of every agent at one tick, stored column-wise.

    Rows are in ascending agent id; ``time == tick * dt``.
    """

    tick: int
    time: float
    ids: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    radius: np.ndarray
    mass: np.ndarray
    v_pref: np.ndarray
    strength: np.ndarray
    panic: np.ndarray
    exited: np.ndarray

    _COLUMNS = ("ids", "pos", "vel", "radius", "mass", "v_pref", "strength", "panic", "exited")

    def __post_init__(self) -> None:
        for name in self._COLUMNS:
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_agents(cls, tick: int, time: float, agents: Iterable[AgentState]) -> "SimFrame":
        agents = sorted(agents, key=lambda a: a.id)
        return cls(
            tick=tick,
            time=time,
            ids=np.array([a.id for a in agents], dtype=np.int64),
            pos=np.array([a.pos for a in agents], dtype=float).reshape(-1, 2),
            vel=np.array([a.vel for a in agents], dtype=float).reshape(-1, 2),
            radius=np.array([a.radius for a in agents], dtype=float),
            mass=np.array([a.mass for a in agents], dtype=float),
            v_pref=np.array([a.v_pref for a in agents], dtype=float),
            strength=np.array([a.strength for a in agents], dtype=float),
            panic=np.array([a.panic for a in agents], dtype=float),
            exited=np.array([a.exited for a in agents], dtype=bool),
        )

    @property
    def agents(self) -> list[AgentState]:
        return [
            AgentState(
                id=int(self.ids[k]),
                pos=(float(self.pos[k, 0]), float(self.pos[k, 1])),
                vel=(float(self.vel[k, 0]), float(self.vel[k, 1])),
                radius=float(self.radius[k]),
                mass=float(self.mass[k]),
                v_pref=float(self.v_pref[k]),
                strength=float(self.strength[k]),
                panic=float(self.panic[k]),
                exited=bool(self.exited[k]),
            )
            for k in range(len(self))
        ]

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.vel[:, 0], self.vel[:, 1])


def validate_scenario(spec: ScenarioSpec) -> ValidationReport:
    """Checks every scenario invariant without raising.

    Errors make the scenario unusable; warnings flag settings under which the explicit
    integrators may overshoot.

    Args:
        spec: Scenario to check. It is not modified.

    Returns:
        Report with one message per violated rule.
    """
    report = ValidationReport()
    _check_domain(spec, report)
    _check_sim(spec.sim, report)
    params = _check_params(spec, report)
    _check_obstacles(spec, report)
    _check_exits(spec, report)
    _check_hazards(spec, report)
    _check_groups(spec, report)
    if report.ok:
        _check_reachability(spec, report)
    if params is not None and spec.sim.dt > 0:
        _stability_warnings(spec, params, report)
    return report


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def _check_domain(spec: ScenarioSpec, report: ValidationReport) -> None:
    if not _finite(spec.width, spec.height, spec.cell_size):
        report.errors.append("domain width, height and cell_size must be finite")
        return
    if not (spec.width > 0 and spec.height > 0):
        report.errors.append("domain width and height must be > 0")
    if not spec.cell_size > 0:
        report.errors.append("domain cell_size must be > 0")


def _check_sim(sim: SimSettings, report: ValidationReport) -> None:
    if not (math.isfinite(sim.dt) and sim.dt > 0):
        report.errors.append("sim.dt must be > 0")
    if not (math.isfinite(sim.max_time) and sim.max_time >= 0):
        report.errors.append("sim.max_time must be >= 0")
    if not 0 <= sim.seed <= _U64_MAX:
        report.errors.append("sim.seed must be an unsigned 64-bit integer")
    if not sim.output_every >= 1:
        report.errors.append("sim.output_every must be >= 1")


def _check_params(spec: ScenarioSpec, report: ValidationReport) -> Optional[ModelParams]:
    try:
        params = spec.resolved_params()
    except KeyError as exc:
        report.errors.append(str(exc.args[0]))
        return None
    report.errors.extend(params.problems())
    return params


def _check_obstacles(spec: ScenarioSpec, report: ValidationReport) -> None:
    for k, rect in enumerate(spec.obstacles):
        if not _finite(*rect):
            report.errors.append(f"obstacle {k}: coordinates must be finite")
        elif not (rect.w > 0 and rect.h > 0):
            report.errors.append(f"obstacle {k}: width and height must be > 0")
        elif not rect_inside(rect, spec.domain):
            report.errors.append(f"obstacle {k}: lies outside the domain")


def _check_exits(spec: ScenarioSpec, report: ValidationReport) -> None:
    if not spec.exits:
        report.errors.append("no exits")
    for k, seg in enumerate(spec.exits):
        if not _finite(*seg):
            report.errors.append(f"exit {k}: coordinates must be finite")
            continue
        ends = ((seg.x1, seg.y1), (seg.x2, seg.y2))
        if not all(_point_in_domain(p, spec) for p in ends):
            report.errors.append(f"exit {k}: segment leaves the domain")
        for m, rect in enumerate(spec.obstacles):
            if segment_hits_rect_interior(seg, rect):
                report.errors.append(f"exit {k}: segment intersects obstacle {m}")


def _check_hazards(spec: ScenarioSpec, report: ValidationReport) -> None:
    for k, hazard in enumerate(spec.hazards):
        if not _finite(hazard.x, hazard.y):
            report.errors.append(f"hazard {k}: position must be finite")
        if hazard.A_h is not None and not (math.isfinite(hazard.A_h) and hazard.A_h >= 0):
            report.errors.append(f"hazard {k}: A_h must be finite and >= 0")
        if hazard.lambda_h is not None and not (
            math.isfinite(hazard.lambda_h) and hazard.lambda_h > 0
        ):
            report.errors.append(f"hazard {k}: lambda_h must be finite and > 0")


def _check_groups(spec: ScenarioSpec, report: ValidationReport) -> None:
    for k, group in enumerate(spec.groups):
        if group.count < 0:
            report.errors.append(f"group {k}: count must be >= 0")
        rect = group.rect
        if not _finite(*rect):
            report.errors.append(f"group {k}: spawn rectangle must be finite")
        elif not (rect.w >= 0 and rect.h >= 0):
            report.errors.append(f"group {k}: spawn rectangle must have non-negative size")
        elif not rect_inside(rect, spec.domain):
            report.errors.append(f"group {k}: spawn rectangle lies outside the domain")
        for m, obstacle in enumerate(spec.obstacles):
            if rects_overlap(rect, obstacle):
                report.errors.append(f"group {k}: spawn rectangle overlaps obstacle {m}")
        for name in SpawnGroup.RANGES:
            lo, hi = getattr(group, name)
            if not _finite(lo, hi):
                report.errors.append(f"group {k}: {name} range must be finite")
            elif not lo <= hi:
                report.errors.append(f"group {k}: {name} range must satisfy lo <= hi")
        if not group.radius[0] > 0:
            report.errors.append(f"group {k}: radius must be > 0")
        if not group.mass[0] > 0:
            report.errors.append(f"group {k}: mass must be > 0")
        if not group.v_pref[0] > 0:
            report.errors.append(f"group {k}: v_pref must be > 0")
        for name in ("strength", "panic"):
            lo, hi = getattr(group, name)
            if not (0 <= lo and hi <= 1):
                report.errors.append(f"group {k}: {name} range must lie in [0, 1]")


def _check_reachability(spec: ScenarioSpec, report: ValidationReport) -> None:
    for k in unreachable_groups(build_nav_field(spec), spec.groups):
        if spec.groups[k].count > 0:
            report.errors.append(f"group {k}: spawn rectangle cannot reach any exit")


def _stability_warnings(spec: ScenarioSpec, params: ModelParams, report: ValidationReport) -> None:
    dt = spec.sim.dt
    if dt > params.tau / 2:
        report.warnings.append("dt exceeds tau/2")
    radii = [g.radius[0] for g in spec.groups if g.count > 0 and g.radius[0] > 0]
    if radii:
        r_min = min(radii)
        weight = _HEX_PACKING_DENSITY * params.R_contagion**2 / (3.0 * r_min**2)
        weight = min(weight, spec.population - 1)
        if dt * params.beta * weight > 1:
            report.warnings.append(
                "dt*beta*neighbour weight exceeds 1; contagion update may overshoot"
            )


def _point_in_domain(point: Sequence[float], spec: ScenarioSpec) -> bool:
    x, y = point
    return (
        -_BOUNDARY_TOL <= x <= spec.width + _BOUNDARY_TOL
        and -_BOUNDARY_TOL <= y <= spec.height + _BOUNDARY_TOL
    )


def spawn_agents(spec: ScenarioSpec, seed: Optional[int] = None) -> list[AgentState]:
    """Places every spawn group's agents without overlap.

    Per agent the attributes are drawn uniformly from the group ranges (radius, v_pref,
    mass, strength fraction, panic, in that order), then the centre is rejection-sampled
    uniformly in the group rectangle until the disc is inside the domain and touches
    neither an obstacle nor an earlier agent.

    Args:
        spec: A validated scenario.
        seed: Seed of the generator; defaults to ``spec.sim.seed``.

    Returns:
        Agents with dense ids from 0, in group order.

    Raises:
        PlacementError: when an agent cannot be placed within the attempt limit.
    """
    seed = spec.sim.seed if seed is None else seed
    logger.debug("spawning %d agents with seed %d", spec.population, seed)
    rng = np.random.default_rng(seed)
    s_max = spec.resolved_params().S_max
    total = spec.population
    placed_pos = np.empty((total, 2))
    placed_r = np.empty(total)
    agents: list[AgentState] = []
    for g, group in enumerate(spec.groups):
        for k in range(group.count):
            radius = rng.uniform(*group.radius)
            v_pref = rng.uniform(*group.v_pref)
            mass = rng.uniform(*group.mass)
            strength = rng.uniform(*group.strength) * s_max
            panic = rng.uniform(*group.panic)
            n = len(agents)
            pos = _place(rng, spec, group.rect, radius, placed_pos[:n], placed_r[:n])
            if pos is None:
                raise PlacementError(group=g, agent=k, attempts=MAX_PLACEMENT_ATTEMPTS)
            placed_pos[n] = pos
            placed_r[n] = radius
            agents.append(
                AgentState(
                    id=n,
                    pos=(float(pos[0]), float(pos[1])),
                    vel=(0.0, 0.0),
                    radius=float(radius),
                    mass=float(mass),
                    v_pref=float(v_pref),
                    strength=float(min(max(strength, 0.0), s_max)),
                    panic=float(min(max(panic, 0.0), 1.0)),
                )
            )
    return agents


def _place(
    rng: np.random.Generator,
    spec: ScenarioSpec,
    rect: Rect,
    radius: float,
    others: np.ndarray,
    other_radii: np.ndarray,
) -> Optional[np.ndarray]:
    attempts = 0
    while attempts < MAX_PLACEMENT_ATTEMPTS:
        batch = min(_PLACEMENT_BATCH, MAX_PLACEMENT_ATTEMPTS - attempts)
        attempts += batch
        cand = np.column_stack(
            (rect.x + rng.random(batch) * rect.w, rect.y + rng.random(batch) * rect.h)
        )
        ok = (
            (cand[:, 0] >= radius)
            & (cand[:, 0] <= spec.width - radius)
            & (cand[:, 1] >= radius)
            & (cand[:, 1] <= spec.height - radius)
        )
        for obstacle in spec.obstacles:
            _, _, dist = closest_on_rect(cand, obstacle)
            ok &= dist >= radius
        if len(others):
            gap = np.hypot(
                cand[:, None, 0] - others[None, :, 0], cand[:, None, 1] - others[None, :, 1]
            ) - (radius + other_radii[None, :])
            ok &= (gap >= 0).all(axis=1)
        hits = np.flatnonzero(ok)
        if hits.size:
            return cand[hits[0]]
    return None
