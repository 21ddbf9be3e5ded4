"""Panic dynamics: contagion, hazard perception, exertion coupling and decay.

All rates are per second and evaluated from one frame's panic values; ``update_panic``
applies them with an explicit Euler step.
"""
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import Hazard, ModelParams


@dataclass(frozen=True)
class EmotionIncrement:
    """Additive panic rates of one agent (or aligned arrays for many agents).

    ``decay`` is the realised decay rate ``delta_decay * E``, not the constant.
    """

    contagion: Union[float, np.ndarray]
    hazard: Union[float, np.ndarray]
    james_lange: Union[float, np.ndarray]
    decay: Union[float, np.ndarray]

    @property
    def net(self):
        return self.contagion + self.hazard + self.james_lange - self.decay


def contagion_rates(
    panic: np.ndarray, rows: np.ndarray, cols: np.ndarray, dist: np.ndarray, params: ModelParams
) -> np.ndarray:
    """Contagion rate of every agent from a neighbour pair list.

    Pairs must be sorted by ``rows`` then ``cols`` so that each agent's sum runs over its
    neighbours in ascending order. Pairs farther apart than ``R_contagion`` are ignored.

    Args:
        panic: Panic of every agent.
        rows: Index of the receiving agent of each pair.
        cols: Index of the neighbour of each pair.
        dist: Centre distance of each pair.
        params: Model constants.

    Returns:
        ``beta * sum_j (1 - d_j / R) * max(0, E_j - E_i)`` per agent.
    """
    panic = np.asarray(panic, dtype=float)
    within = dist <= params.R_contagion
    rows, cols, dist = rows[within], cols[within], dist[within]
    weight = 1.0 - dist / params.R_contagion
    pull = weight * np.maximum(0.0, panic[cols] - panic[rows])
    total = np.zeros(len(panic))
    np.add.at(total, rows, pull)
    return params.beta * total


def contagion_rate(
    self_panic: float, neighbors: Sequence[tuple[float, float]], params: ModelParams
) -> float:
    """Contagion rate of one agent from ``(panic, distance)`` neighbours in ascending id."""
    if not neighbors:
        return 0.0
    others = np.array(neighbors, dtype=float).reshape(-1, 2)
    panic = np.concatenate(([self_panic], others[:, 0]))
    cols = np.arange(1, len(panic))
    rows = np.zeros(len(cols), dtype=np.int64)
    return float(contagion_rates(panic, rows, cols, others[:, 1], params)[0])


def _hazard_table(hazards, params: ModelParams) -> np.ndarray:
    if isinstance(hazards, np.ndarray):
        return hazards.reshape(-1, 4)
    return np.array([Hazard(*h).resolve(params) for h in hazards], dtype=float).reshape(-1, 4)


def hazard_rates(positions: np.ndarray, hazards, params: ModelParams) -> np.ndarray:
    """``sum_h A_h exp(-d / lambda_h)`` for every position, hazards summed in order.

    ``hazards`` is a sequence of :class:`Hazard` or an ``(k, 4)`` array of
    ``x, y, A_h, lambda_h`` rows.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    total = np.zeros(len(positions))
    for x, y, amplitude, length in _hazard_table(hazards, params):
        d = np.hypot(positions[:, 0] - x, positions[:, 1] - y)
        total = total + amplitude * np.exp(-d / length)
    return total


def hazard_rate(pos: Sequence[float], hazards, params: ModelParams) -> float:
    return float(hazard_rates(np.asarray(pos, dtype=float), hazards, params)[0])


def james_lange_rate(consumed, dt: float, params: ModelParams):
    """Panic driven by bodily exertion: ``gamma_jl * (consumed / dt) / P_ref``."""
    if not dt > 0:
        raise ValueError("dt must be > 0.")
    return params.gamma_jl * (np.asarray(consumed, dtype=float) / dt) / params.P_ref


def decay_rate(panic, params: ModelParams):
    return params.delta_decay * np.asarray(panic, dtype=float)


def update_panic(panic, inc: EmotionIncrement, dt: float):
    """Explicit Euler step of the panic level, clamped to ``[0, 1]``.

    Works elementwise when ``panic`` and the increment hold arrays.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0.")
    new = np.clip(np.asarray(panic, dtype=float) + dt * inc.net, 0.0, 1.0)
    return float(new) if new.ndim == 0 else new
