"""Closed-loop simulation of controller + two-inertia plant.

The inner loop runs in a numba kernel. Each step the controller reads the
current command and (optionally quantized) table feedback, and the plant
advances one RK4 step under the held torque. The RK4 step is applied through
its exact linear transition matrices (see ``plant.rk4_transition``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .controller import ControlGains
from .metrics import PerformanceReport, report_from_stats
from .motion import CommandTrajectory
from .plant import MechanicalParams, rk4_transition

DIVERGENCE_FACTOR = 100.0


class DivergenceError(RuntimeError):
    """Raised when the simulated state blows up; carries the blow-up time."""

    def __init__(self, t_blowup: float, duration: float, reason: str = "divergence"):
        super().__init__(f"{reason} at t={t_blowup:.6g} s (of {duration:.6g} s); gains likely unstable")
        self.t_blowup = t_blowup
        self.duration = duration
        self.reason = reason


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    settle_tail: float = 0.1
    encoder_counts_per_rev: int = 0
    load_torque: float = 0.0
    velocity_feedback: str = "motor"

    def __post_init__(self):
        if self.velocity_feedback not in ("motor", "load"):
            raise ValueError("velocity_feedback must be 'motor' or 'load'")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.settle_tail < 0:
            raise ValueError("settle_tail must be >= 0")
        if self.encoder_counts_per_rev < 0:
            raise ValueError("encoder_counts_per_rev must be >= 0")

    @property
    def quantization_step(self) -> float:
        """Feedback angle resolution in rad; 0 means ideal feedback."""
        if self.encoder_counts_per_rev == 0:
            return 0.0
        return 2.0 * math.pi / (4 * self.encoder_counts_per_rev)


TRACE_COLUMNS = ("t", "pos_cmd", "vel_cmd", "pos_actual", "vel_actual", "torque_cmd", "torque_applied")


@dataclass(frozen=True, eq=False)
class Trace:
    """Sampled closed-loop run. ``states`` holds the plant state at each sample."""

    dt: float
    t: np.ndarray
    pos_cmd: np.ndarray
    vel_cmd: np.ndarray
    pos_actual: np.ndarray
    vel_actual: np.ndarray
    torque_cmd: np.ndarray
    torque_applied: np.ndarray
    states: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def columns(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in TRACE_COLUMNS])


@dataclass(frozen=True)
class DivergenceVerdict:
    ok: bool
    t: float | None = None
    reason: str = ""


def check_divergence(t, pos_actual, vel_actual, stroke: float) -> DivergenceVerdict:
    """Flag the first sample that is non-finite or beyond 100x the stroke."""
    pos = np.asarray(pos_actual, dtype=float)
    vel = np.asarray(vel_actual, dtype=float)
    bad_nan = ~(np.isfinite(pos) & np.isfinite(vel))
    with np.errstate(invalid="ignore"):
        bad_far = np.abs(pos) > DIVERGENCE_FACTOR * stroke
    bad = bad_nan | bad_far
    if not bad.any():
        return DivergenceVerdict(True)
    k = int(np.argmax(bad))
    reason = "non-finite state" if bad_nan[k] else "position beyond divergence bound"
    return DivergenceVerdict(False, float(np.asarray(t)[k]), reason)


@numba.njit(cache=True)
def _kernel(phi, gamma_t, gamma_d, r, tmax, kp, kvp, kvi, kfv, pos_cmd, vel_cmd,
            n_total, dt, qstep, load_torque, bound, motor_velocity_fb, record, out, states):
    """Returns (status, k_stop, max|e_p|, max|e_v|, mean e_v, M2 e_v, n).

    status 0 = completed, 1 = diverged at sample k_stop.
    """
    a00, a01, a02, a03 = phi[0, 0], phi[0, 1], phi[0, 2], phi[0, 3]
    a10, a11, a12, a13 = phi[1, 0], phi[1, 1], phi[1, 2], phi[1, 3]
    a20, a21, a22, a23 = phi[2, 0], phi[2, 1], phi[2, 2], phi[2, 3]
    a30, a31, a32, a33 = phi[3, 0], phi[3, 1], phi[3, 2], phi[3, 3]
    b0, b1, b2, b3 = gamma_t[0], gamma_t[1], gamma_t[2], gamma_t[3]
    d0 = gamma_d[0] * load_torque
    d1 = gamma_d[1] * load_torque
    d2 = gamma_d[2] * load_torque
    d3 = gamma_d[3] * load_torque
    # kp * (pc - pos_fb) / r with the division hoisted out of the loop
    kpr = kp / r
    kfr = kfv / r
    x0 = 0.0
    x1 = 0.0
    x2 = 0.0
    x3 = 0.0
    z = 0.0
    n_cmd = pos_cmd.shape[0]
    max_ep = 0.0
    max_ev = 0.0
    mean = 0.0
    m2 = 0.0
    for k in range(n_total):
        j = k if k < n_cmd else n_cmd - 1
        pc = pos_cmd[j]
        vc = vel_cmd[j]
        pos = r * x2
        vel = r * x3
        if not (math.isfinite(pos) and math.isfinite(vel)) or abs(pos) > bound:
            return 1, k, max_ep, max_ev, mean, m2, k
        if qstep > 0.0:
            pos_fb = r * (math.floor(x2 / qstep + 0.5) * qstep)
        else:
            pos_fb = pos

        w = x1 if motor_velocity_fb else x3
        e_w = kpr * (pc - pos_fb) + kfr * vc - w
        tcmd = kvp * e_w + kvi * z
        tsat = min(max(tcmd, -tmax), tmax)
        if abs(tcmd) <= tmax or e_w * tcmd < 0.0:
            z += e_w * dt

        ep = pc - pos
        ev = vc - vel
        max_ep = max(max_ep, abs(ep))
        max_ev = max(max_ev, abs(ev))
        delta = ev - mean
        mean += delta / (k + 1)
        m2 += delta * (ev - mean)

        if record:
            out[0, k] = k * dt
            out[1, k] = pc
            out[2, k] = vc
            out[3, k] = pos
            out[4, k] = vel
            out[5, k] = tcmd
            out[6, k] = tsat
            states[k, 0] = x0
            states[k, 1] = x1
            states[k, 2] = x2
            states[k, 3] = x3

        y0 = a00 * x0 + a01 * x1 + a02 * x2 + a03 * x3 + d0
        y1 = a10 * x0 + a11 * x1 + a12 * x2 + a13 * x3 + d1
        y2 = a20 * x0 + a21 * x1 + a22 * x2 + a23 * x3 + d2
        y3 = a30 * x0 + a31 * x1 + a32 * x2 + a33 * x3 + d3
        x0 = y0 + b0 * tsat
        x1 = y1 + b1 * tsat
        x2 = y2 + b2 * tsat
        x3 = y3 + b3 * tsat
    return 0, n_total, max_ep, max_ev, mean, m2, n_total


_TRANSITION_CACHE: dict = {}


def _transition(params: MechanicalParams, dt: float):
    key = (params, dt)
    hit = _TRANSITION_CACHE.get(key)
    if hit is None:
        if len(_TRANSITION_CACHE) > 256:
            _TRANSITION_CACHE.clear()
        hit = rk4_transition(params, dt)
        _TRANSITION_CACHE[key] = hit
    return hit


def _run(params, gains, trajectory, config, record):
    if not math.isclose(trajectory.dt, config.dt, rel_tol=1e-12):
        raise ValueError(f"trajectory dt {trajectory.dt} != config dt {config.dt}")
    phi, gamma_t, gamma_d = _transition(params, config.dt)
    n_tail = int(round(config.settle_tail / config.dt))
    n_total = len(trajectory) + n_tail
    if record:
        out = np.empty((7, n_total))
        states = np.empty((n_total, 4))
    else:
        out = np.empty((7, 0))
        states = np.empty((0, 4))
    bound = DIVERGENCE_FACTOR * trajectory.distance
    result = _kernel(phi, gamma_t, gamma_d, params.drive_coeff_R, params.max_torque_Tmax,
                     gains.kp, gains.kvp, gains.kvi, gains.kfv,
                     trajectory.position, trajectory.velocity, n_total, config.dt,
                     config.quantization_step, config.load_torque, bound,
                     config.velocity_feedback == "motor", record, out, states)
    status, k_stop = result[0], result[1]
    if status != 0:
        raise DivergenceError(k_stop * config.dt, (n_total - 1) * config.dt,
                              "non-finite state or position beyond divergence bound")
    return result, out, states


def run_closed_loop(params: MechanicalParams, gains: ControlGains, trajectory: CommandTrajectory,
                    config: SimConfig, seed: int | None = None) -> Trace:
    """Simulate from rest at zero and return the full trace.

    The command is held at its last sample for ``config.settle_tail`` seconds.
    Raises ``DivergenceError`` when the state blows up.
    """
    _, out, states = _run(params, gains, trajectory, config, record=True)
    meta = {"gains": gains.to_dict(), "params": params, "profile_id": trajectory.label,
            "seed": seed, "distance": trajectory.distance}
    return Trace(config.dt, out[0], out[1], out[2], out[3], out[4], out[5], out[6],
                 states=states, meta=meta)


def simulate_report(params: MechanicalParams, gains: ControlGains, trajectory: CommandTrajectory,
                    config: SimConfig) -> PerformanceReport:
    """Same run as ``run_closed_loop`` without storing samples; returns the metrics."""
    result, _, _ = _run(params, gains, trajectory, config, record=False)
    _, _, max_ep, max_ev, _, m2, n = result
    return report_from_stats(max_ep, max_ev, m2 / n)
