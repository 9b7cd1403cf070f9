"""Small-signal frequency analysis of the cascaded position loop.

The loop is broken at the position-feedback summing junction. Saturation is
dropped and velocity feedforward is ignored, since it sits outside the
feedback path. The open-loop transfer is

    L(s) = kp * C(s) P(s) / (1 + C(s) P(s)) / s

with C(s) = kvp + kvi/s and P(s) the torque-to-load-velocity transfer of the
two-inertia plant.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .controller import ControlGains
from .plant import MechanicalParams

AM_MIN_DB = 6.0
PM_MIN_DEG = 30.0
MR_MAX = 1.4


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    omega: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 1 or len(w) < 2:
            raise ValueError("grid needs at least two frequencies")
        if w[0] <= 0 or np.any(np.diff(w) <= 0):
            raise ValueError("grid must be positive and strictly increasing")
        object.__setattr__(self, "omega", w)

    @classmethod
    def logspace(cls, w_min: float = 1e-1, w_max: float = 1e5, count: int = 2000) -> "FrequencyGrid":
        return cls(np.logspace(math.log10(w_min), math.log10(w_max), count))

    @property
    def count(self) -> int:
        return len(self.omega)

    @property
    def min(self) -> float:
        return float(self.omega[0])

    @property
    def max(self) -> float:
        return float(self.omega[-1])


DEFAULT_GRID = FrequencyGrid.logspace()


@dataclass(frozen=True)
class Margins:
    gain_margin_db: float
    phase_margin_deg: float
    gain_crossover: float
    phase_crossover: float


@dataclass(frozen=True)
class StabilityReport:
    gain_margin_Am: float
    phase_margin_Pm: float
    resonance_peak_Mr: float
    gain_crossover: float
    phase_crossover: float
    closed_loop_stable: bool = True

    @property
    def feasible(self) -> bool:
        return check_constraints(self).feasible

    def to_dict(self) -> dict:
        out = asdict(self)
        out["feasible"] = self.feasible
        return out


@dataclass(frozen=True)
class ConstraintCheck:
    feasible: bool
    violations: tuple  # normalized (gain margin, phase margin, resonance peak)

    @property
    def violation_count(self) -> int:
        return sum(1 for v in self.violations if v > 0)


def plant_velocity_response(params: MechanicalParams, s):
    """Torque -> load angular velocity of the two-inertia plant at complex ``s``."""
    jm, jl = params.motor_inertia_Jm, params.load_inertia_Jl
    k, b = params.screw_stiffness_K, params.damping_B
    coupling = b * s + k
    return coupling / (s * (jm * jl * s ** 2 + coupling * (jm + jl)))


def plant_motor_velocity_response(params: MechanicalParams, s):
    """Torque -> rotor angular velocity of the two-inertia plant."""
    jm, jl = params.motor_inertia_Jm, params.load_inertia_Jl
    k, b = params.screw_stiffness_K, params.damping_B
    coupling = b * s + k
    return (jl * s ** 2 + coupling) / (s * (jm * jl * s ** 2 + coupling * (jm + jl)))


def loop_response(params: MechanicalParams, gains: ControlGains, grid: FrequencyGrid = DEFAULT_GRID,
                  velocity_feedback: str = "motor"):
    """Open position-loop response L(jw) on the grid.

    With ``velocity_feedback="motor"`` the velocity loop closes on the rotor
    speed and the load angle follows through the compliant screw.
    """
    s, inv_s, plant, tail = _loop_factors(params, grid, velocity_feedback)
    inner = (gains.kvp + gains.kvi * inv_s) * plant
    return gains.kp * inner / (1.0 + inner) * tail


_FACTOR_CACHE: dict = {}


def _loop_factors(params, grid, velocity_feedback):
    """Gain-independent pieces of the loop response, cached per plant and grid."""
    key = (params, grid.omega.tobytes(), velocity_feedback)
    hit = _FACTOR_CACHE.get(key)
    if hit is not None:
        return hit
    s = 1j * grid.omega
    inv_s = 1.0 / s
    if velocity_feedback == "load":
        plant, tail = plant_velocity_response(params, s), inv_s
    else:
        plant = plant_motor_velocity_response(params, s)
        coupling = params.damping_B * s + params.screw_stiffness_K
        tail = coupling / (params.load_inertia_Jl * s ** 2 + coupling) * inv_s
    if len(_FACTOR_CACHE) > 64:
        _FACTOR_CACHE.clear()
    hit = _FACTOR_CACHE[key] = (s, inv_s, plant, tail)
    return hit


def _interp_log(w0, w1, frac):
    return math.exp(math.log(w0) + frac * (math.log(w1) - math.log(w0)))


def margins(response, grid) -> Margins:
    """Gain and phase margins from a sampled open-loop response.

    Crossings are located between grid points by linear interpolation in
    log-frequency. With several crossings the smallest margin is reported;
    with none the corresponding margin is +inf.
    """
    omega = grid.omega if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    response = np.asarray(response, dtype=complex)
    if len(response) < 2 or len(response) != len(omega):
        raise ValueError("response must have at least two points matching the grid")
    log_mag = np.log(np.abs(response))
    phase = np.degrees(np.unwrap(np.angle(response)))

    pm, wgc = math.inf, math.nan
    for i in np.nonzero(np.sign(log_mag[:-1]) * np.sign(log_mag[1:]) <= 0)[0]:
        m0, m1 = log_mag[i], log_mag[i + 1]
        if m0 == m1:
            continue
        frac = m0 / (m0 - m1)
        ph = phase[i] + frac * (phase[i + 1] - phase[i])
        candidate = (ph + 360.0) % 360.0 - 180.0  # 180 + phase, wrapped to [-180, 180)
        if candidate < pm:
            pm, wgc = candidate, _interp_log(omega[i], omega[i + 1], frac)

    # phase crossings: phase = -180 + 360 n for any integer n
    u = (phase + 180.0) / 360.0
    am, wpc = math.inf, math.nan
    lo = np.floor(np.minimum(u[:-1], u[1:]))
    hi = np.floor(np.maximum(u[:-1], u[1:]))
    for i in np.nonzero((hi > lo) | (u[:-1] == np.round(u[:-1])))[0]:
        u0, u1 = u[i], u[i + 1]
        for n in range(int(math.ceil(min(u0, u1))), int(math.floor(max(u0, u1))) + 1):
            frac = 0.0 if u1 == u0 else (n - u0) / (u1 - u0)
            if not 0.0 <= frac <= 1.0:
                continue
            mag = log_mag[i] + frac * (log_mag[i + 1] - log_mag[i])
            candidate = -20.0 * mag / math.log(10.0)
            if candidate < am:
                am, wpc = candidate, _interp_log(omega[i], omega[i + 1], frac)
    return Margins(am, pm, wgc, wpc)


def peak_ratio(closed_response, grid) -> float:
    """Peak of |T(jw)| over the grid divided by its lowest-frequency magnitude.

    The peak is refined by a parabola through the three samples around the
    discrete maximum (in log-frequency).
    """
    omega = grid.omega if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    mag = np.abs(np.asarray(closed_response))
    i = int(np.argmax(mag))
    peak = mag[i]
    if 0 < i < len(mag) - 1:
        x = np.log(omega[i - 1:i + 2])
        y = mag[i - 1:i + 2]
        denom = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2])
        a = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / denom
        b = (x[2] ** 2 * (y[0] - y[1]) + x[1] ** 2 * (y[2] - y[0]) + x[0] ** 2 * (y[1] - y[2])) / denom
        if a < 0:
            xv = -b / (2 * a)
            if x[0] <= xv <= x[2]:
                c = y[0] - a * x[0] ** 2 - b * x[0]
                peak = max(peak, a * xv ** 2 + b * xv + c)
    return float(peak / mag[0])


def closed_loop_matrix(params: MechanicalParams, gains: ControlGains,
                       velocity_feedback: str = "motor") -> np.ndarray:
    """State matrix of the linear closed position loop.

    States: rotor angle, rotor speed, load angle, load speed, velocity integrator.
    """
    jm, jl = params.motor_inertia_Jm, params.load_inertia_Jl
    k, b = params.screw_stiffness_K, params.damping_B
    kp, kvp, kvi = gains.kp, gains.kvp, gains.kvi
    # torque = kvp * (kp * (ref - theta_l) - omega_l) + kvi * z, ref = 0
    a = np.zeros((5, 5))
    a[0, 1] = 1.0
    a[1, 0] = -k / jm
    a[1, 1] = -b / jm
    a[1, 2] = (k - kvp * kp) / jm
    a[1, 3] = (b - kvp) / jm
    a[1, 4] = kvi / jm
    a[2, 3] = 1.0
    a[3, 0] = k / jl
    a[3, 1] = b / jl
    a[3, 2] = -k / jl
    a[3, 3] = -b / jl
    a[4, 2] = -kp
    a[4, 3] = -1.0
    if velocity_feedback == "motor":
        # move the speed feedback from omega_l to omega_m
        a[1, 1] -= kvp / jm
        a[1, 3] += kvp / jm
        a[4, 1] = -1.0
        a[4, 3] = 0.0
    return a


def is_closed_loop_stable(params: MechanicalParams, gains: ControlGains,
                          velocity_feedback: str = "motor") -> bool:
    a = closed_loop_matrix(params, gains, velocity_feedback)
    if gains.kvi == 0:
        a = a[:4, :4]  # the integrator state is disconnected
    eig = np.linalg.eigvals(a)
    return bool(np.all(eig.real < 0))


def resonance_peak(params: MechanicalParams, gains: ControlGains, grid: FrequencyGrid = DEFAULT_GRID,
                   response=None, velocity_feedback: str = "motor"):
    """Relative resonance peak of the command-to-position response.

    Returns ``(Mr, stable)``; an unstable closed loop gives ``(inf, False)``.
    """
    if not is_closed_loop_stable(params, gains, velocity_feedback):
        return math.inf, False
    if response is None:
        response = loop_response(params, gains, grid, velocity_feedback)
    return peak_ratio(response / (1.0 + response), grid), True


def stability_report(params: MechanicalParams, gains: ControlGains,
                     grid: FrequencyGrid = DEFAULT_GRID, velocity_feedback: str = "motor") -> StabilityReport:
    response = loop_response(params, gains, grid, velocity_feedback)
    m = margins(response, grid)
    mr, stable = resonance_peak(params, gains, grid, response=response,
                                velocity_feedback=velocity_feedback)
    return StabilityReport(m.gain_margin_db, m.phase_margin_deg, mr, m.gain_crossover,
                           m.phase_crossover, stable)


def check_constraints(report: StabilityReport, am_min: float = AM_MIN_DB, pm_min: float = PM_MIN_DEG,
                      mr_max: float = MR_MAX) -> ConstraintCheck:
    """Strict-inequality feasibility plus normalized violation magnitudes."""
    am, pm, mr = report.gain_margin_Am, report.phase_margin_Pm, report.resonance_peak_Mr
    v_am = max(0.0, (am_min - am) / am_min)
    v_pm = max(0.0, (pm_min - pm) / pm_min)
    v_mr = max(0.0, (mr - mr_max) / mr_max) if math.isfinite(mr) else math.inf
    feasible = am > am_min and pm > pm_min and mr < mr_max
    return ConstraintCheck(feasible, (v_am, v_pm, v_mr))
