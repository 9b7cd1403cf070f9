import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feeddrive.controller import ControlGains
from feeddrive.plant import (KGCM2, MechanicalParams, PlantState, acceleration_capacity, drive_coeff_from_lead,
                             kgcm2, resonance_frequency, rk4_transition, saturate_torque, state_derivative,
                             step_rk4)
from feeddrive.simulation import SimConfig, run_closed_loop

from conftest import axis


def exact_free_response(params, x0, t):
    """Oracle: x(t) = expm(A t) x0 via the eigendecomposition of the plant matrix."""
    jm, jl, k, b = params.motor_inertia_Jm, params.load_inertia_Jl, params.screw_stiffness_K, params.damping_B
    a = np.array([[0, 1, 0, 0],
                  [-k / jm, -b / jm, k / jm, b / jm],
                  [0, 0, 0, 1],
                  [k / jl, b / jl, -k / jl, -b / jl]])
    w, v = np.linalg.eig(a)
    return np.real(v @ np.diag(np.exp(w * t)) @ np.linalg.solve(v, x0))


def test_unit_conversions():
    assert kgcm2(45.5) == pytest.approx(45.5e-4)
    assert KGCM2 == 1e-4
    assert drive_coeff_from_lead(10.0) == pytest.approx(1.5915494309)


def test_resonance_motor1(motor1):
    # closed form sqrt(K (Jm + Jl) / (Jm Jl)) with Jm = 88.9, Jl = 45.5 kg*cm^2
    jm, jl = 88.9e-4, 45.5e-4
    oracle = math.sqrt(612 * (jm + jl) / (jm * jl))
    assert resonance_frequency(motor1) == pytest.approx(oracle, rel=1e-12)
    assert abs(resonance_frequency(motor1) - 451) <= 1


def test_params_validation():
    with pytest.raises(ValueError, match="motor_inertia_Jm"):
        axis(rotor_kgcm2=-1.0)
    with pytest.raises(ValueError):
        axis(torque=0.0)
    with pytest.raises(ValueError, match="damping"):
        MechanicalParams(612, 1e-3, 1e-3, -0.1, 1.0, 1.0)


def test_derivative_rigid_start(motor3):
    d = state_derivative(PlantState(), 2.0, motor3)
    assert d.omega_m == pytest.approx(2.0 / motor3.motor_inertia_Jm)
    assert d.omega_l == 0.0
    # load torque decelerates the load only
    d = state_derivative(PlantState(), 0.0, motor3, load_torque=1.0)
    assert d.omega_l == pytest.approx(-1.0 / motor3.load_inertia_Jl)
    assert d.omega_m == 0.0


def test_saturate(motor3):
    assert saturate_torque(100.0, motor3) == 28.75
    assert saturate_torque(-100.0, motor3) == -28.75
    assert saturate_torque(3.0, motor3) == 3.0


def test_step_rejects_bad_dt(motor3):
    with pytest.raises(ValueError):
        step_rk4(PlantState(), 0.0, 0.0, motor3)


def test_rk4_convergence_order(motor1):
    x0 = np.array([1e-3, 0.0, 0.0, 0.0])  # initial twist, free vibration
    t_end = 0.02
    errors = []
    steps = [1e-4 * 2 ** -k for k in range(4)]
    for dt in steps:
        n = int(round(t_end / dt))
        s = PlantState.from_array(x0)
        for _ in range(n):
            s = step_rk4(s, 0.0, dt, motor1)
        errors.append(np.max(np.abs(s.as_array() - exact_free_response(motor1, x0, t_end))))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
    assert 3.7 <= orders[0] <= 4.3, orders
    assert all(3.7 <= p <= 4.3 for p in orders[:2]), orders


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4), st.floats(-30.0, 30.0), st.floats(-5.0, 5.0))
def test_transition_matches_step(x, torque, load):
    params = axis()
    phi, gt, gd = rk4_transition(params, 1e-4)
    direct = step_rk4(PlantState.from_array(x), torque, 1e-4, params, load).as_array()
    via = phi @ np.array(x) + gt * torque + gd * load
    np.testing.assert_allclose(via, direct, rtol=1e-12, atol=1e-15)


def test_momentum_balance_on_trace(motor3, short_traj):
    trace = run_closed_loop(motor3, ControlGains(30.0, 2.0, 40.0, 0.8), short_traj,
                            SimConfig(load_torque=0.5))
    p = np.array([PlantState.from_array(s).momentum(motor3) for s in trace.states])
    impulse = (trace.torque_applied[:-1] - 0.5) * trace.dt
    balance = np.diff(p) - impulse
    scale = np.sum(np.abs(trace.torque_applied[:-1]) + 0.5) * trace.dt
    assert np.max(np.abs(np.cumsum(balance))) <= 1e-6 * scale


def test_free_energy_never_increases():
    params = axis()
    s = PlantState(2e-3, 0.0, 0.0, 0.0)
    energy = [s.energy(params)]
    for _ in range(2000):
        s = step_rk4(s, 0.0, 1e-4, params)
        energy.append(s.energy(params))
    energy = np.array(energy)
    assert np.all(np.diff(energy) <= 1e-12 * energy[0])
    assert energy[-1] < energy[0]


def test_acceleration_capacity_catalog_row():
    rotor, table = acceleration_capacity(28.75, 25.5, 45.5, 10 / (2 * math.pi))
    assert rotor == pytest.approx(28.75 / 71.0)
    assert table == pytest.approx(rotor * 10 / (2 * math.pi))
    assert acceleration_capacity(28.75, 25.5, 45.5)[1] is None
    with pytest.raises(ValueError):
        acceleration_capacity(1.0, 0.0, 45.5)


def test_plant_state_roundtrip():
    s = PlantState(1.0, 2.0, 3.0, 4.0)
    assert PlantState.from_array(s.as_array()) == s
