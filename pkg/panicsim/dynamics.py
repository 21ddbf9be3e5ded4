"""Social-force locomotion modulated by panic and fatigue.

Every operation is written once as a vectorised kernel over agent arrays; the
single-agent functions wrap the same kernels so that the engine and the library
surface produce identical numbers.
"""
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import NonFiniteForce
from .model import AgentState, ModelParams, Rect, ScenarioSpec, Segment
from .utils import closest_on_rect, closest_on_segment

DEGENERATE_DISTANCE = 1e-9
_ON_WALL_TOL = 1e-9


@dataclass(frozen=True)
class ForceBreakdown:
    """Forces on one agent in newtons; ``total`` is summed drive, repulsion, wall."""

    drive: np.ndarray
    repulsion: np.ndarray
    wall: np.ndarray
    total: np.ndarray

    @classmethod
    def combine(cls, drive, repulsion, wall) -> "ForceBreakdown":
        return cls(drive=drive, repulsion=repulsion, wall=wall, total=drive + repulsion + wall)


@dataclass(frozen=True)
class Walls:
    """Static surfaces: domain wall pieces (W, E, S, N, exits cut out) and obstacles."""

    width: float
    height: float
    segments: tuple[Segment, ...]
    obstacles: tuple[Rect, ...]

    @classmethod
    def from_scenario(cls, spec: ScenarioSpec) -> "Walls":
        return cls(
            width=spec.width,
            height=spec.height,
            segments=tuple(_wall_pieces(spec.width, spec.height, spec.exits)),
            obstacles=tuple(spec.obstacles),
        )


def _wall_pieces(width: float, height: float, exits: Sequence[Segment]) -> list[Segment]:
    pieces = []
    sides = (
        (0.0, True, height),
        (width, True, height),
        (0.0, False, width),
        (height, False, width),
    )
    for fixed, vertical, length in sides:
        gaps = []
        for seg in exits:
            a, b = (seg.x1, seg.x2) if vertical else (seg.y1, seg.y2)
            if abs(a - fixed) <= _ON_WALL_TOL and abs(b - fixed) <= _ON_WALL_TOL:
                lo, hi = (seg.y1, seg.y2) if vertical else (seg.x1, seg.x2)
                gaps.append((min(lo, hi), max(lo, hi)))
        cursor = 0.0
        spans = []
        for lo, hi in sorted(gaps):
            if lo > cursor:
                spans.append((cursor, lo))
            cursor = max(cursor, hi)
        if cursor < length:
            spans.append((cursor, length))
        for lo, hi in spans:
            if vertical:
                pieces.append(Segment(fixed, lo, fixed, hi))
            else:
                pieces.append(Segment(lo, fixed, hi, fixed))
    return pieces


def desired_speed(v_pref, panic, strength, params: ModelParams):
    """Preferred speed amplified by panic and capped by the fatigue ceiling.

    ``v_cap(S) = v_crawl + (v_phys - v_crawl) * (S / S_max) ** kappa_fat``; the result is
    ``min(v_cap(S), v_pref * (1 + alpha_p * E))``. Works elementwise on arrays.
    """
    fraction = np.clip(np.asarray(strength, dtype=float) / params.S_max, 0.0, 1.0)
    v_cap = params.v_crawl + (params.v_phys - params.v_crawl) * np.power(
        fraction, params.kappa_fat
    )
    return np.minimum(v_cap, np.asarray(v_pref, dtype=float) * (1.0 + params.alpha_p * panic))


def drive_forces(mass, vel, goal, v_des, params: ModelParams) -> np.ndarray:
    mass = np.asarray(mass, dtype=float)
    v_des = np.asarray(v_des, dtype=float)
    return mass[..., None] * (v_des[..., None] * goal - vel) / params.tau


def drive_force(agent: AgentState, goal, v_des: float, params: ModelParams) -> np.ndarray:
    """Relaxation of the velocity toward ``v_des * goal``: ``m (v_des goal - v) / tau``."""
    return drive_forces(agent.mass, np.asarray(agent.vel), np.asarray(goal, float), v_des, params)


def _unit_normals(diff: np.ndarray, dist: np.ndarray, ids: np.ndarray):
    degenerate = dist < DEGENERATE_DISTANCE
    safe = np.where(degenerate, DEGENERATE_DISTANCE, dist)
    normal = diff / safe[:, None]
    if np.any(degenerate):
        angle = (ids[degenerate] % 8) * (np.pi / 4)
        normal[degenerate] = np.column_stack((np.cos(angle), np.sin(angle)))
    return normal, safe


def _contact(normal, dist, reach, rel_vel, params: ModelParams) -> np.ndarray:
    tangent = np.column_stack((-normal[:, 1], normal[:, 0]))
    overlap = np.maximum(reach - dist, 0.0)
    push = params.A_rep * np.exp((reach - dist) / params.B_rep) + params.k_body * overlap
    dv_t = rel_vel[:, 0] * tangent[:, 0] + rel_vel[:, 1] * tangent[:, 1]
    slide = params.kappa_fric * overlap * dv_t
    return push[:, None] * normal + slide[:, None] * tangent


def pair_forces(pos_a, pos_b, vel_a, vel_b, r_sum, ids_a, params: ModelParams) -> np.ndarray:
    """Force on each ``a`` from its partner ``b``; all arguments are aligned arrays."""
    diff = pos_a - pos_b
    dist = np.hypot(diff[:, 0], diff[:, 1])
    normal, dist = _unit_normals(diff, dist, ids_a)
    return _contact(normal, dist, r_sum, vel_b - vel_a, params)


def agent_repulsion(a: AgentState, b: AgentState, params: ModelParams) -> np.ndarray:
    """Exponential social repulsion, body compression and sliding friction on ``a``.

    Coincident centres (distance below 1e-9) use the unit normal at angle
    ``(a.id mod 8) * pi / 4`` and distance 1e-9.
    """
    force = pair_forces(
        np.array([a.pos], dtype=float),
        np.array([b.pos], dtype=float),
        np.array([a.vel], dtype=float),
        np.array([b.vel], dtype=float),
        np.array([a.radius + b.radius]),
        np.array([a.id]),
        params,
    )
    return force[0]


def wall_forces(pos, vel, radius, ids, walls: Walls, params: ModelParams) -> np.ndarray:
    """Summed wall force per agent, walls W, E, S, N first, then obstacles by index."""
    total = np.zeros_like(pos)
    still = -vel
    for seg in walls.segments:
        closest = closest_on_segment(pos, seg)
        diff = pos - closest
        normal, dist = _unit_normals(diff, np.hypot(diff[:, 0], diff[:, 1]), ids)
        total = total + _contact(normal, dist, radius, still, params)
    for rect in walls.obstacles:
        _, normal, dist = closest_on_rect(pos, rect)
        total = total + _contact(normal, dist, radius, still, params)
    return total


def wall_repulsion(agent: AgentState, walls: Walls, params: ModelParams) -> np.ndarray:
    force = wall_forces(
        np.array([agent.pos], dtype=float),
        np.array([agent.vel], dtype=float),
        np.array([agent.radius]),
        np.array([agent.id]),
        walls,
        params,
    )
    return force[0]


def force_breakdown(
    agent: AgentState,
    neighbours: Iterable[AgentState],
    goal,
    walls: Walls,
    params: ModelParams,
) -> ForceBreakdown:
    """All forces on one agent; neighbours are summed in ascending id."""
    v_des = desired_speed(agent.v_pref, agent.panic, agent.strength, params)
    repulsion = np.zeros(2)
    for other in sorted(neighbours, key=lambda a: a.id):
        if other.id != agent.id and not other.exited:
            repulsion = repulsion + agent_repulsion(agent, other, params)
    return ForceBreakdown.combine(
        drive_force(agent, goal, v_des, params), repulsion, wall_repulsion(agent, walls, params)
    )


def integrate_arrays(pos, vel, mass, radius, force, dt: float, params: ModelParams, walls: Walls):
    """Semi-implicit Euler with the hard speed cap, then confinement to free space.

    Raises:
        NonFiniteForce: with the row index of the first offending agent as ``agent_id``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0.")
    finite = np.isfinite(force).all(axis=1)
    if not finite.all():
        raise NonFiniteForce(agent_id=int(np.flatnonzero(~finite)[0]))
    new_vel = vel + force / mass[:, None] * dt
    speed = np.hypot(new_vel[:, 0], new_vel[:, 1])
    over = speed > params.v_hard
    if np.any(over):
        new_vel[over] *= (params.v_hard / speed[over])[:, None]
    new_pos = _confine(pos + new_vel * dt, radius, walls)
    return new_pos, new_vel


def _confine(pos: np.ndarray, radius: np.ndarray, walls: Walls) -> np.ndarray:
    pos = _clamp_to_domain(pos, radius, walls)
    if not walls.obstacles:
        return pos
    for rect in walls.obstacles:
        closest, normal, dist = closest_on_rect(pos, rect)
        inside = dist < radius
        if np.any(inside):
            pos[inside] = closest[inside] + normal[inside] * radius[inside, None]
    return _clamp_to_domain(pos, radius, walls)


def _clamp_to_domain(pos: np.ndarray, radius: np.ndarray, walls: Walls) -> np.ndarray:
    x = np.minimum(np.maximum(pos[:, 0], radius), walls.width - radius)
    y = np.minimum(np.maximum(pos[:, 1], radius), walls.height - radius)
    return np.column_stack((x, y))


def integrate(agent: AgentState, total_force, dt: float, params: ModelParams, walls: Walls):
    """New position and velocity of one agent after a tick of length ``dt``.

    Raises:
        NonFiniteForce: when a force component is NaN or infinite.
    """
    try:
        pos, vel = integrate_arrays(
            np.array([agent.pos], dtype=float),
            np.array([agent.vel], dtype=float),
            np.array([agent.mass]),
            np.array([agent.radius]),
            np.asarray(total_force, dtype=float).reshape(1, 2),
            dt,
            params,
            walls,
        )
    except NonFiniteForce:
        raise NonFiniteForce(agent_id=agent.id) from None
    return (float(pos[0, 0]), float(pos[0, 1])), (float(vel[0, 0]), float(vel[0, 1]))
