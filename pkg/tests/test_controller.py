import numpy as np
import pytest

from feeddrive.controller import ControlGains, ControllerState, control_step
from feeddrive.plant import PlantState, step_rk4
from feeddrive.simulation import SimConfig, run_closed_loop


def test_gain_validation():
    with pytest.raises(ValueError):
        ControlGains(-1.0, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        ControlGains(1.0, 1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        ControlGains(float("nan"), 1.0, 1.0, 0.5)
    g = ControlGains(1.0, 2.0, 3.0, 0.5)
    assert ControlGains.from_array(g.as_array()) == g
    assert g.to_dict() == {"kp": 1.0, "kvp": 2.0, "kvi": 3.0, "kfv": 0.5}


def test_proportional_law(motor3):
    r = motor3.drive_coeff_R
    g = ControlGains(kp=10.0, kvp=0.5, kvi=0.0, kfv=0.0)
    t, ts, st = control_step((1.0, 0.0), (0.0, 2.0), g, ControllerState(), 1e-4, motor3)
    assert t == pytest.approx(0.5 * (10.0 * 1.0 / r - 2.0 / r))
    assert ts == t
    assert st.velocity_integrator == pytest.approx((10.0 / r - 2.0 / r) * 1e-4)


def test_feedforward_and_rotor_speed(motor3):
    r = motor3.drive_coeff_R
    g = ControlGains(kp=0.0, kvp=1.0, kvi=0.0, kfv=1.0)
    t, _, _ = control_step((0.0, 50.0), (0.0, 50.0), g, ControllerState(), 1e-4, motor3)
    assert t == pytest.approx(0.0, abs=1e-12)
    t, _, _ = control_step((0.0, 50.0), (0.0, 50.0), g, ControllerState(), 1e-4, motor3, rotor_speed=10.0)
    assert t == pytest.approx(50.0 / r - 10.0)


def test_anti_windup(motor3):
    g = ControlGains(kp=100.0, kvp=100.0, kvi=10.0, kfv=0.0)
    state = ControllerState(1.0)
    # saturated, error drives further into saturation: integrator frozen
    t, ts, new = control_step((10.0, 0.0), (0.0, 0.0), g, state, 1e-4, motor3)
    assert t > motor3.max_torque_Tmax and ts == motor3.max_torque_Tmax
    assert new.velocity_integrator == 1.0
    # saturated positive command but error negative: integrator unwinds
    g2 = ControlGains(kp=0.0, kvp=1.0, kvi=1e4, kfv=0.0)
    t, ts, new = control_step((0.0, 0.0), (0.0, 1.0), g2, state, 1e-4, motor3)
    assert t > motor3.max_torque_Tmax
    assert new.velocity_integrator < 1.0


def test_bad_dt(motor3):
    with pytest.raises(ValueError):
        control_step((0, 0), (0, 0), ControlGains(1, 1, 1, 0), ControllerState(), 0.0, motor3)


@pytest.mark.parametrize("feedback", ["motor", "load"])
def test_kernel_matches_reference_loop(motor3, short_traj, feedback):
    """The compiled loop reproduces step-by-step control_step + step_rk4."""
    gains = ControlGains(25.0, 0.1 if feedback == "load" else 1.5, 3.0, 0.9)
    cfg = SimConfig(velocity_feedback=feedback, settle_tail=0.0)
    trace = run_closed_loop(motor3, gains, short_traj, cfg)
    s, c = PlantState(), ControllerState()
    r = motor3.drive_coeff_R
    for k in range(len(short_traj)):
        fb = (r * s.theta_l, r * s.omega_l)
        rotor = s.omega_m if feedback == "motor" else None
        tcmd, tsat, c = control_step((short_traj.position[k], short_traj.velocity[k]), fb, gains, c,
                                     cfg.dt, motor3, rotor_speed=rotor)
        assert trace.torque_cmd[k] == pytest.approx(tcmd, rel=1e-7, abs=1e-9)
        assert trace.pos_actual[k] == pytest.approx(fb[0], rel=1e-7, abs=1e-12)
        s = step_rk4(s, tsat, cfg.dt, motor3)
