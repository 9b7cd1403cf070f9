"""Two-inertia model of a ball-screw feed axis.

Motor rotor (Jm) and reflected load (Jl) are joined by the torsional screw
stiffness K with damping B acting on the relative motion. Everything in here
works in SI units; catalog values in kg*cm^2 are converted by ``kgcm2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KGCM2 = 1e-4  # kg*m^2 per kg*cm^2


def kgcm2(value: float) -> float:
    """Convert an inertia from kg*cm^2 to kg*m^2."""
    return value * KGCM2


def drive_coeff_from_lead(lead_mm: float) -> float:
    """Table travel per radian of screw rotation (mm/rad) for a given lead."""
    return lead_mm / (2.0 * math.pi)


@dataclass(frozen=True)
class MechanicalParams:
    """Physical constants of the axis plus the fitted motor.

    Attributes
    ----------
    screw_stiffness_K : float
        Torsional stiffness between rotor and load, N*m/rad.
    motor_inertia_Jm : float
        Rotor inertia, kg*m^2.
    load_inertia_Jl : float
        Load inertia reflected to the screw axis, kg*m^2.
    damping_B : float
        Damping across the coupling, N*m*s/rad.
    drive_coeff_R : float
        Table displacement per radian of screw, mm/rad.
    max_torque_Tmax : float
        Peak motor torque, N*m.
    """

    screw_stiffness_K: float
    motor_inertia_Jm: float
    load_inertia_Jl: float
    damping_B: float
    drive_coeff_R: float
    max_torque_Tmax: float

    def __post_init__(self):
        for name in ("screw_stiffness_K", "motor_inertia_Jm", "load_inertia_Jl",
                     "drive_coeff_R", "max_torque_Tmax"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.damping_B) and self.damping_B >= 0):
            raise ValueError(f"damping_B must be >= 0, got {self.damping_B!r}")

    @property
    def total_inertia(self) -> float:
        return self.motor_inertia_Jm + self.load_inertia_Jl

    @classmethod
    def from_catalog(cls, *, screw_stiffness: float, load_inertia_kgcm2: float,
                     damping: float, drive_coeff: float, max_torque: float,
                     rotor_inertia_kgcm2: float) -> "MechanicalParams":
        """Build from catalog units (kg*cm^2 inertias)."""
        return cls(
            screw_stiffness_K=screw_stiffness,
            motor_inertia_Jm=kgcm2(rotor_inertia_kgcm2),
            load_inertia_Jl=kgcm2(load_inertia_kgcm2),
            damping_B=damping,
            drive_coeff_R=drive_coeff,
            max_torque_Tmax=max_torque,
        )


@dataclass(frozen=True)
class PlantState:
    """Rotor and load angles (rad) and angular velocities (rad/s)."""

    theta_m: float = 0.0
    omega_m: float = 0.0
    theta_l: float = 0.0
    omega_l: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_m, self.omega_m, self.theta_l, self.omega_l])

    @classmethod
    def from_array(cls, x) -> "PlantState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def table_position(self, params: MechanicalParams) -> float:
        return params.drive_coeff_R * self.theta_l

    def table_velocity(self, params: MechanicalParams) -> float:
        return params.drive_coeff_R * self.omega_l

    def momentum(self, params: MechanicalParams) -> float:
        return params.motor_inertia_Jm * self.omega_m + params.load_inertia_Jl * self.omega_l

    def energy(self, params: MechanicalParams) -> float:
        twist = self.theta_m - self.theta_l
        return 0.5 * (params.motor_inertia_Jm * self.omega_m ** 2
                      + params.load_inertia_Jl * self.omega_l ** 2
                      + params.screw_stiffness_K * twist ** 2)


def saturate_torque(commanded_torque: float, params: MechanicalParams) -> float:
    tmax = params.max_torque_Tmax
    return min(max(commanded_torque, -tmax), tmax)


def state_derivative(state: PlantState, applied_torque: float, params: MechanicalParams,
                     load_torque: float = 0.0) -> PlantState:
    """Time derivative of the plant state.

    ``applied_torque`` acts on the rotor and must already be saturated;
    ``load_torque`` is an external disturbance opposing the load.
    """
    coupling = (params.screw_stiffness_K * (state.theta_m - state.theta_l)
                + params.damping_B * (state.omega_m - state.omega_l))
    return PlantState(
        theta_m=state.omega_m,
        omega_m=(applied_torque - coupling) / params.motor_inertia_Jm,
        theta_l=state.omega_l,
        omega_l=(coupling - load_torque) / params.load_inertia_Jl,
    )


def _axpy(state: PlantState, rate: PlantState, h: float) -> PlantState:
    return PlantState(state.theta_m + h * rate.theta_m, state.omega_m + h * rate.omega_m,
                      state.theta_l + h * rate.theta_l, state.omega_l + h * rate.omega_l)


def step_rk4(state: PlantState, applied_torque: float, dt: float, params: MechanicalParams,
             load_torque: float = 0.0) -> PlantState:
    """Advance one classical RK4 step with the torque held over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = state_derivative(state, applied_torque, params, load_torque)
    k2 = state_derivative(_axpy(state, k1, dt / 2), applied_torque, params, load_torque)
    k3 = state_derivative(_axpy(state, k2, dt / 2), applied_torque, params, load_torque)
    k4 = state_derivative(_axpy(state, k3, dt), applied_torque, params, load_torque)
    x = state.as_array()
    rates = [k.as_array() for k in (k1, k2, k3, k4)]
    x_next = x + (dt / 6.0) * (rates[0] + 2 * rates[1] + 2 * rates[2] + rates[3])
    return PlantState.from_array(x_next)


def rk4_transition(params: MechanicalParams, dt: float):
    """Return ``(phi, gamma_t, gamma_d)`` such that one RK4 step is

        x_next = phi @ x + gamma_t * applied_torque + gamma_d * load_torque.

    The plant is linear, so the RK4 map is linear in state and held inputs;
    the columns are obtained by pushing unit vectors through ``step_rk4``.
    """
    phi = np.empty((4, 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1.0
        phi[:, i] = step_rk4(PlantState.from_array(e), 0.0, dt, params).as_array()
    gamma_t = step_rk4(PlantState(), 1.0, dt, params).as_array()
    gamma_d = step_rk4(PlantState(), 0.0, dt, params, load_torque=1.0).as_array()
    return phi, gamma_t, gamma_d


def acceleration_capacity(motor_torque_T: float, motor_inertia_Jm: float,
                          load_inertia_Jl: float, drive_coeff_R: float | None = None):
    """Torque over total inertia, in catalog units N*m/(kg*cm^2).

    Inertias are given in kg*cm^2. Returns ``(rotor_side, table_side)``
    where the table-side value is the rotor-side value times R (mm/rad);
    ``table_side`` is None when R is not supplied.
    """
    if motor_inertia_Jm <= 0 or load_inertia_Jl <= 0:
        raise ValueError("inertias must be positive")
    rotor = motor_torque_T / (motor_inertia_Jm + load_inertia_Jl)
    table = None if drive_coeff_R is None else rotor * drive_coeff_R
    return rotor, table


def resonance_frequency(params: MechanicalParams) -> float:
    """Undamped two-inertia resonance, rad/s."""
    jm, jl = params.motor_inertia_Jm, params.load_inertia_Jl
    return math.sqrt(params.screw_stiffness_K * (jm + jl) / (jm * jl))
