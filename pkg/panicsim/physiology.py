"""Strength consumption from the mechanical work of each agent's own driving force."""
from dataclasses import dataclass

import numpy as np

from .model import ModelParams


@dataclass
class StrengthLedger:
    """Per-agent energy bookkeeping, indexed by agent id.

    ``consumed`` and ``recovered`` are cumulative joules, ``last_power`` the mechanical
    power of the latest tick in watts. The engine owns the only mutable instance.
    """

    initial: np.ndarray
    consumed: np.ndarray
    recovered: np.ndarray
    last_power: np.ndarray

    @classmethod
    def start(cls, strength: np.ndarray) -> "StrengthLedger":
        n = len(strength)
        return cls(
            initial=np.array(strength, dtype=float),
            consumed=np.zeros(n),
            recovered=np.zeros(n),
            last_power=np.zeros(n),
        )

    def record(self, rows: np.ndarray, consumed, recovered, power) -> None:
        self.consumed[rows] += consumed
        self.recovered[rows] += recovered
        self.last_power[rows] = power


def mechanical_power(drive_force, vel):
    """Positive work rate of the driving force, ``max(0, F . v)`` in watts."""
    drive_force = np.asarray(drive_force, dtype=float)
    vel = np.asarray(vel, dtype=float)
    work_rate = drive_force[..., 0] * vel[..., 0] + drive_force[..., 1] * vel[..., 1]
    return np.maximum(0.0, work_rate)


def update_strength(strength, power, speed, dt: float, params: ModelParams):
    """Drains basal and mechanical consumption and credits rest recovery.

    ``loss = (c_basal + power) dt``; ``gain = r_rec dt`` when ``speed < v_rest``. The new
    reserve is clamped to ``[0, S_max]``; the reported consumption never exceeds what
    was available and the reported recovery never overfills the reserve, so that
    ``S - S' == consumed - recovered``.

    Returns:
        ``(new_strength, consumed_this_tick, recovered_this_tick)``.
    """
    strength = np.asarray(strength, dtype=float)
    loss = (params.c_basal + np.asarray(power, dtype=float)) * dt
    gain = np.where(np.asarray(speed) < params.v_rest, params.r_rec * dt, 0.0)
    consumed = np.minimum(loss, strength + gain)
    recovered = np.minimum(gain, params.S_max - strength + consumed)
    new_strength = np.clip(strength - loss + gain, 0.0, params.S_max)
    return new_strength, consumed, recovered
