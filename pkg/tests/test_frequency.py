import math

import numpy as np
import pytest

from feeddrive.controller import ControlGains
from feeddrive.frequency import (FrequencyGrid, StabilityReport, check_constraints, closed_loop_matrix,
                                 is_closed_loop_stable, loop_response, margins, peak_ratio, resonance_peak,
                                 stability_report)

GRID = FrequencyGrid.logspace(1e-2, 1e3, 4000)


def third_order(w):
    s = 1j * w
    return 1.0 / (s * (s + 1) * (s + 2))


def test_third_order_margins():
    m = margins(third_order(GRID.omega), GRID)
    assert m.gain_margin_db == pytest.approx(20 * math.log10(6), rel=5e-3)
    assert m.phase_crossover == pytest.approx(math.sqrt(2), rel=5e-3)
    # phase margin oracle: bisection on |L| = 1
    lo, hi = 0.1, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if abs(third_order(mid)) > 1 else (lo, mid)
    pm = 180 + math.degrees(np.angle(third_order(lo)))
    assert m.phase_margin_deg == pytest.approx(pm, rel=5e-3)
    assert m.gain_crossover == pytest.approx(lo, rel=5e-3)


def test_no_crossings_give_infinite_margins():
    s = 1j * GRID.omega
    m = margins(0.01 / (s + 1), GRID)
    assert math.isinf(m.gain_margin_db) and math.isinf(m.phase_margin_deg)


@pytest.mark.parametrize("zeta", [0.3, 0.5, 0.6])
def test_second_order_peak(zeta):
    s = 1j * GRID.omega
    closed = 1.0 / (s ** 2 + 2 * zeta * s + 1)
    assert peak_ratio(closed, GRID) == pytest.approx(1 / (2 * zeta * math.sqrt(1 - zeta ** 2)), rel=5e-3)


def test_margins_input_validation():
    with pytest.raises(ValueError):
        margins(np.ones(3), GRID)


def test_grid_validation():
    with pytest.raises(ValueError):
        FrequencyGrid(np.array([1.0, 1.0, 2.0]))
    with pytest.raises(ValueError):
        FrequencyGrid(np.array([1.0]))


@pytest.mark.parametrize("feedback", ["motor", "load"])
def test_loop_response_matches_state_space(motor3, feedback):
    """L/(1+L) equals the command-to-load-angle response of the closed-loop matrix."""
    gains = ControlGains(20.0, 0.1, 2.0, 0.0) if feedback == "load" else ControlGains(20.0, 1.5, 30.0, 0.0)
    a = closed_loop_matrix(motor3, gains, feedback)
    jm = motor3.motor_inertia_Jm
    b = np.array([0.0, gains.kvp * gains.kp / jm, 0.0, 0.0, gains.kp])
    grid = FrequencyGrid.logspace(1.0, 1e4, 50)
    lr = loop_response(motor3, gains, grid, feedback)
    for w, L in zip(grid.omega, lr):
        t_ss = np.linalg.solve(1j * w * np.eye(5) - a, b)[2]
        assert L / (1 + L) == pytest.approx(t_ss, rel=1e-7)


def test_unstable_loop_reports_infinite_peak(motor3):
    gains = ControlGains(500.0, 0.01, 5000.0, 0.0)
    assert not is_closed_loop_stable(motor3, gains)
    mr, stable = resonance_peak(motor3, gains)
    assert math.isinf(mr) and not stable
    check = check_constraints(stability_report(motor3, gains))
    assert not check.feasible and math.isinf(check.violations[2])


def test_integrator_free_loop_is_judged_without_the_integrator(motor3):
    assert is_closed_loop_stable(motor3, ControlGains(5.0, 1.0, 0.0, 0.0))


def test_moderate_gains_are_feasible(motor3):
    rep = stability_report(motor3, ControlGains(20.0, 1.5, 30.0, 0.5))
    assert rep.closed_loop_stable
    assert rep.feasible == check_constraints(rep).feasible


def test_constraint_boundaries_are_strict():
    at_limits = StabilityReport(6.0, 30.0, 1.4, 1.0, 2.0, True)
    check = check_constraints(at_limits)
    assert not check.feasible
    assert check.violations == (0.0, 0.0, 0.0)
    inside = StabilityReport(6.01, 30.1, 1.39, 1.0, 2.0, True)
    assert check_constraints(inside).feasible
    outside = StabilityReport(3.0, 15.0, 2.8, 1.0, 2.0, True)
    assert check_constraints(outside).violations == pytest.approx((0.5, 0.5, 1.0))
    assert check_constraints(outside).violation_count == 3
