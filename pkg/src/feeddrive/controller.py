"""Cascaded servo controller: P position loop, PI velocity loop, velocity feedforward.

The current loop is treated as ideal, so the velocity controller output is the
motor torque command directly. The position loop closes on the table
position; the velocity loop closes on the rotor speed when it is supplied and
on the table speed otherwise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .plant import MechanicalParams

GAIN_NAMES = ("kp", "kvp", "kvi", "kfv")


@dataclass(frozen=True)
class ControlGains:
    """kp [1/s], kvp [N*m*s/rad], kvi [N*m/rad], kfv [-]."""

    kp: float
    kvp: float
    kvi: float
    kfv: float

    def __post_init__(self):
        for name in GAIN_NAMES:
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"gain {name} must be finite and >= 0, got {value!r}")
        if self.kfv > 1:
            raise ValueError(f"kfv must lie in [0, 1], got {self.kfv!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.kp, self.kvp, self.kvi, self.kfv])

    @classmethod
    def from_array(cls, values) -> "ControlGains":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ControllerState:
    velocity_integrator: float = 0.0


def control_step(cmd, feedback, gains: ControlGains, state: ControllerState, dt: float,
                 params: MechanicalParams, rotor_speed: float | None = None):
    """One controller update.

    Parameters
    ----------
    cmd : (float, float)
        Commanded table position (mm) and velocity (mm/s).
    feedback : (float, float)
        Measured table position (mm) and velocity (mm/s).
    rotor_speed : float, optional
        Measured rotor speed (rad/s). When given, the velocity loop uses it
        instead of the table speed.

    Returns
    -------
    (torque_cmd, saturated_torque, new_state)
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    r = params.drive_coeff_R
    pos_cmd, vel_cmd = cmd
    pos_fb, vel_fb = feedback

    v_ref = gains.kp * (pos_cmd - pos_fb) / r + gains.kfv * vel_cmd / r
    e_v = v_ref - (vel_fb / r if rotor_speed is None else rotor_speed)
    torque_cmd = gains.kvp * e_v + gains.kvi * state.velocity_integrator

    tmax = params.max_torque_Tmax
    saturated = min(max(torque_cmd, -tmax), tmax)
    integrator = state.velocity_integrator
    # conditional integration: freeze while saturated unless e_v unwinds it
    if abs(torque_cmd) <= tmax or e_v * torque_cmd < 0:
        integrator += e_v * dt
    return torque_cmd, saturated, ControllerState(integrator)
