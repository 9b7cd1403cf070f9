import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feeddrive.controller import ControlGains
from feeddrive.frequency import check_constraints
from feeddrive.optimize import (CONSTRAINED, UNCONSTRAINED, OptimizerResult, ScenarioObjective, SearchSpace,
                                TuningScenario, cross_validate, fireworks_search, island_ga_search,
                                penalized_objective, tune)
from feeddrive.optimize.tuning import constraint_penalty, divergence_penalty
from feeddrive.simulation import DivergenceError, SimConfig

SEARCHES = {"fwa": fireworks_search, "ga": island_ga_search}
SPHERE_SPACE = SearchSpace.box([-5.0] * 4, [5.0] * 4)


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


@pytest.mark.parametrize("name", ["fwa", "ga"])
def test_sphere_reaches_optimum(name):
    res = SEARCHES[name](sphere, SPHERE_SPACE, 5000, seed=3)
    assert res.best_value < 1e-2
    assert res.evaluations_used == 5000


@pytest.mark.parametrize("name", ["fwa", "ga"])
def test_seed_determinism(name):
    a = SEARCHES[name](sphere, SPHERE_SPACE, 600, seed=11)
    b = SEARCHES[name](sphere, SPHERE_SPACE, 600, seed=11)
    assert a.candidates.tobytes() == b.candidates.tobytes()
    assert a.values.tobytes() == b.values.tobytes()
    c = SEARCHES[name](sphere, SPHERE_SPACE, 600, seed=12)
    assert c.candidates.tobytes() != a.candidates.tobytes()


@pytest.mark.parametrize("name", ["fwa", "ga"])
@pytest.mark.parametrize("budget", [83, 97, 250, 1001])
def test_budget_exact_elitist_in_bounds(name, budget):
    res = SEARCHES[name](sphere, SPHERE_SPACE, budget, seed=1)
    assert res.evaluations_used == budget == len(res.values)
    assert np.all(np.diff(res.history) <= 0)
    assert np.all(res.candidates >= -5.0) and np.all(res.candidates <= 5.0)
    assert res.best_value == res.values.min()


def test_fwa_budget_smaller_than_a_generation():
    calls = []
    res = fireworks_search(lambda x: calls.append(1) or sphere(x), SPHERE_SPACE, 7, seed=0)
    assert len(calls) == 7 == res.evaluations_used


@pytest.mark.parametrize("name,budget", [("fwa", 4), ("ga", 79)])
def test_budget_below_population_rejected(name, budget):
    with pytest.raises(ValueError):
        SEARCHES[name](sphere, SPHERE_SPACE, budget, seed=0)


def test_non_finite_objective_is_worst():
    res = fireworks_search(lambda x: math.nan if x[0] > 0 else sphere(x), SPHERE_SPACE, 300, seed=0)
    assert math.isfinite(res.best_value)
    assert np.all(res.candidates[np.isinf(res.values), 0] > 0)


def test_log_space_roundtrip_and_bounds():
    space = SearchSpace.gains()
    x = np.array([2.0, 0.5, 100.0, 0.3])
    np.testing.assert_allclose(space.decode(space.encode(x)), x)
    assert space.contains(space.decode(space.enc_upper + 1.0))
    with pytest.raises(ValueError):
        SearchSpace.gains({"kp": (0.0, 10.0)})
    with pytest.raises(ValueError):
        SearchSpace.box([1.0], [0.0])


@pytest.fixture(scope="module")
def scenario(short_traj):
    from conftest import axis
    return TuningScenario(axis(), short_traj, SimConfig())


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 500), st.floats(0.01, 200), st.floats(0.1, 5000), st.floats(0, 1))
def test_penalty_dominance(scenario, kp, kvp, kvi, kfv):
    gains = ControlGains(kp, kvp, kvi, kfv)
    raw = penalized_objective(gains, scenario)
    pen = penalized_objective(gains, scenario.with_mode(CONSTRAINED))
    assert pen >= raw
    feasible = check_constraints(ScenarioObjective(scenario).stability(gains)).feasible
    assert (pen == raw) == feasible or not feasible and pen > raw


def test_penalty_arithmetic():
    from feeddrive.frequency import StabilityReport
    rep = StabilityReport(3.0, 15.0, 1.4 * 1.5, 1.0, 1.0, True)
    # violations 0.5, 0.5, 0.5
    assert constraint_penalty(rep) == pytest.approx(1e4 * 0.75)
    unstable = StabilityReport(3.0, 15.0, math.inf, 1.0, 1.0, False)
    assert constraint_penalty(unstable) == pytest.approx(1e4 * (0.25 + 0.25 + 100))
    assert divergence_penalty(DivergenceError(0.0, 2.0)) == 2e6
    assert divergence_penalty(DivergenceError(2.0, 2.0)) == 1e6


def test_divergent_gains_get_penalty(scenario):
    from feeddrive.motion import plan, reciprocate
    # a load torque beyond the motor's peak torque drives the table away
    tiny = reciprocate(plan(0.1, 10.0, 1000.0), cycles=1, dwell=0.2, dt=1e-4)
    obj = ScenarioObjective(TuningScenario(scenario.params, tiny, SimConfig(load_torque=100.0)))
    ev = obj.simulate(ControlGains(50.0, 1.0, 10.0, 0.0))
    assert ev.diverged and ev.W >= 1e6 and ev.report is None
    assert 0 < ev.t_blowup < tiny.duration


@pytest.mark.parametrize("alg", ["fwa", "ga"])
def test_tune_is_deterministic(scenario, alg):
    a = tune(scenario, alg, 120, seed=5)
    b = tune(scenario, alg, 120, seed=5)
    assert a.best_gains == b.best_gains and a.history == b.history
    assert a.evaluations_used == 120 == len(a.evaluations)
    assert a.best_W == min(e.W for e in a.evaluations)


def _result(value, key="k", mode=UNCONSTRAINED, alg="fwa"):
    g = ControlGains(1.0, 1.0, 1.0, 0.5)
    return OptimizerResult(alg, mode, g, value, value, None, None, 10, (), 0, key)


def test_cross_validate_arithmetic():
    assert cross_validate(_result(1.0), _result(1.0, alg="ga")).agree
    v = cross_validate(_result(1.00), _result(1.04, alg="ga"))
    assert v.agree and v.relative_gap == pytest.approx(0.04) and v.consensus == "fwa"
    v = cross_validate(_result(1.20), _result(1.00, alg="ga"))
    assert not v.agree and v.consensus == "ga"
    assert cross_validate(_result(0.0), _result(0.0, alg="ga")).agree


def test_cross_validate_rejects_mismatch():
    with pytest.raises(ValueError):
        cross_validate(_result(1.0, key="a"), _result(1.0, key="b"))
    with pytest.raises(ValueError):
        cross_validate(_result(1.0), _result(1.0, mode=CONSTRAINED))


def test_scenario_key_ignores_mode(scenario):
    assert scenario.key == scenario.with_mode(CONSTRAINED).key
    with pytest.raises(ValueError):
        TuningScenario(scenario.params, scenario.trajectory, scenario.sim, "bogus")


def rastrigin(x):
    x = np.asarray(x)
    return float(10 * len(x) + np.sum(x ** 2 - 10 * np.cos(2 * np.pi * x)))


def test_migration_helps_on_rastrigin():
    space = SearchSpace.box([-5.12] * 4, [5.12] * 4)
    seeds = range(10)
    on = [island_ga_search(rastrigin, space, 3000, seed=s).best_value for s in seeds]
    off = [island_ga_search(rastrigin, space, 3000, seed=s, migration_interval=None).best_value for s in seeds]
    assert np.median(on) <= np.median(off)

