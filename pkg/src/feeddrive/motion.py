"""Trapezoidal velocity planning and reciprocating command trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MotionProfile:
    """Single point-to-point move starting and ending at rest.

    Units are mm, mm/s, mm/s^2 and s. ``t1`` ends the acceleration phase,
    ``t2`` ends the cruise and ``t3`` ends the motion. For a triangular
    profile ``t1 == t2`` and the peak velocity stays below ``cruise_velocity_v``.
    """

    distance: float
    cruise_velocity_v: float
    acceleration_a: float
    t1: float
    t2: float
    t3: float
    shape: str
    peak_velocity: float

    @property
    def accel_distance(self) -> float:
        return 0.5 * self.acceleration_a * self.t1 ** 2

    @property
    def cruise_distance(self) -> float:
        return self.peak_velocity * (self.t2 - self.t1)

    @property
    def decel_distance(self) -> float:
        return 0.5 * self.acceleration_a * (self.t3 - self.t2) ** 2


def plan(distance: float, v: float, a: float) -> MotionProfile:
    """Plan a rest-to-rest move of ``distance`` with velocity and acceleration limits.

    Falls back to a triangular profile when the stroke is too short to reach
    ``v`` (``v**2 / a > distance``).
    """
    for name, value in (("distance", distance), ("v", v), ("a", a)):
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive, got {value!r}")
    if v * v / a <= distance:
        t1 = v / a
        cruise = (distance - v * v / a) / v
        return MotionProfile(distance, v, a, t1, t1 + cruise, 2 * t1 + cruise, "trapezoidal", v)
    peak = math.sqrt(a * distance)
    t1 = peak / a
    return MotionProfile(distance, v, a, t1, t1, 2 * t1, "triangular", peak)


def sample(profile: MotionProfile, t):
    """Position, velocity and acceleration at time ``t`` (scalar or array).

    Before the start of motion nothing is defined; past ``t3`` the profile
    holds at ``(distance, 0, 0)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    a, vp = profile.acceleration_a, profile.peak_velocity
    t1, t2, t3 = profile.t1, profile.t2, profile.t3

    s_a = 0.5 * a * t1 ** 2
    s_u = vp * (t2 - t1)
    td = np.clip(t - t2, 0.0, None)

    accel = t < t1
    cruise = (t >= t1) & (t < t2)
    decel = (t >= t2) & (t < t3)

    pos = np.where(accel, 0.5 * a * t ** 2,
          np.where(cruise, s_a + vp * (t - t1),
          np.where(decel, s_a + s_u + vp * td - 0.5 * a * td ** 2, profile.distance)))
    vel = np.where(accel, a * t,
          np.where(cruise, vp,
          np.where(decel, vp - a * td, 0.0)))
    acc = np.where(accel, a, np.where(cruise, 0.0, np.where(decel, -a, 0.0)))
    if pos.ndim == 0:
        return float(pos), float(vel), float(acc)
    return pos, vel, acc


@dataclass(frozen=True, eq=False)
class CommandTrajectory:
    """Commands sampled on a uniform grid ``t_k = k * dt``.

    ``stroke_markers`` are the sample indices at which each stroke starts
    (a direction reversal for every stroke after the first).
    """

    dt: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    stroke_markers: tuple
    distance: float
    profile: MotionProfile | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.position)

    @property
    def duration(self) -> float:
        return (len(self.position) - 1) * self.dt

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.position)) * self.dt


def reciprocate(profile: MotionProfile, cycles: int = 1, dwell: float = 0.2,
                dt: float = 1e-4) -> CommandTrajectory:
    """Forward stroke, dwell, mirrored return stroke, dwell; ``cycles`` times.

    Every grid point is evaluated in closed form, so the final sample sits
    exactly at position 0.
    """
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dwell < 0:
        raise ValueError("dwell must be >= 0")

    t3 = profile.t3
    period = 2.0 * (t3 + dwell)
    total = cycles * period
    n = int(round(total / dt)) + 1
    t = np.arange(n) * dt

    cycle = np.minimum(np.floor(t / period), cycles - 1)
    phase = t - cycle * period
    # phase can only exceed the period on the final sample
    phase = np.where(t >= total, period, phase)

    forward = phase < t3
    back_start = t3 + dwell
    backward = (phase >= back_start) & (phase < back_start + t3)

    fp, fv, fa = sample(profile, np.where(forward, phase, 0.0))
    bp, bv, ba = sample(profile, np.where(backward, phase - back_start, 0.0))
    dwell_far = (~forward) & (phase < back_start)

    pos = np.where(forward, fp, np.where(dwell_far, profile.distance,
                   np.where(backward, profile.distance - bp, 0.0)))
    vel = np.where(forward, fv, np.where(backward, -bv, 0.0))
    acc = np.where(forward, fa, np.where(backward, -ba, 0.0))

    markers = []
    for c in range(cycles):
        markers.append(int(math.ceil(c * period / dt - 1e-9)))
        markers.append(int(math.ceil((c * period + back_start) / dt - 1e-9)))
    label = f"d{profile.distance:g}_v{profile.cruise_velocity_v:g}_a{profile.acceleration_a:g}"
    return CommandTrajectory(dt, pos, vel, acc, tuple(markers), profile.distance,
                             profile=profile, label=label,
                             meta={"cycles": cycles, "dwell": dwell})
