import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feeddrive.optimize import CONSTRAINED, MODES, UNCONSTRAINED
from feeddrive.plant import acceleration_capacity
from feeddrive.sweep import (SIMULATION_CATALOG, MotorSpec, ProcessGrid, SweepResult, SweepRow, capacity_from_ratio,
                             classify_curve, inertia_ratio, late_degradation, relative_change, relative_changes,
                             run_sweep, trend_report)

from conftest import axis

TINY_GRID = ProcessGrid(speeds=(100.0,), accelerations=(5.0,), stroke=20.0, dwell=0.02)


def test_inertia_ratio_examples():
    assert inertia_ratio(MotorSpec("x", "", 1.0, 88.9), 45.5) == pytest.approx(0.5118, abs=1e-4)
    assert inertia_ratio(MotorSpec("x", "", 1.0, 13.0), 45.5) == pytest.approx(3.5)
    assert inertia_ratio(MotorSpec("x", "", 1.0, 45.5), 45.5) == 1.0


def test_capacity_from_ratio_examples():
    assert capacity_from_ratio(13.5 / 13, 3.5) == pytest.approx(0.2308, abs=1e-4)
    assert round(capacity_from_ratio(37.2 / 55, 45.5 / 55), 2) == 0.37
    assert capacity_from_ratio(0.7, 0.0) == 0.7
    with pytest.raises(ValueError):
        capacity_from_ratio(1.0, -0.1)


@settings(max_examples=100)
@given(st.floats(0.1, 200), st.floats(0.5, 500), st.floats(0.5, 500))
def test_ratio_identity(t, jm, jl):
    r = jl / jm
    assert capacity_from_ratio(t / jm, r) == pytest.approx(acceleration_capacity(t, jm, jl)[0], rel=1e-12)


def test_motor_spec_validation():
    with pytest.raises(ValueError):
        MotorSpec("x", "", -1.0, 1.0)
    with pytest.raises(ValueError):
        MotorSpec("x", "", 1.0, 0.0)


def test_process_grid():
    g = ProcessGrid()
    assert len(g.cells()) == 9 and g.cells()[0] == (100.0, 1.0)
    with pytest.raises(ValueError):
        ProcessGrid(speeds=())
    with pytest.raises(ValueError):
        ProcessGrid(accelerations=(1.0, -2.0))
    assert g.trajectory(400.0, 1.0, 1e-4).profile.t1 == pytest.approx(0.4)


def test_relative_change():
    assert relative_change(1.2, 1.0) == pytest.approx(0.2)
    assert relative_change(1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        relative_change(1.0, 0.0)


@pytest.mark.parametrize("values,shape", [
    ([5, 2, 1, 1.02, 0.99], "improving-then-flat"),
    ([5, 2, 1, 1.5, 2.5], "interior-minimum"),
    ([3, 3, 3, 3], "monotone"),
    ([5, 4, 3, 2, 1], "monotone"),
    ([1, 3, 1.5, 4, 2], "irregular"),
    ([1, 2], "inconclusive"),
    ([1, math.nan, 2], "inconclusive"),
])
def test_classify_curve(values, shape):
    assert classify_curve(values) == shape


def test_late_degradation():
    assert late_degradation([5, 2, 1, 1.5])
    assert not late_degradation([5, 2, 1, 1.05])


@pytest.fixture(scope="module")
def small_sweep():
    return run_sweep(SIMULATION_CATALOG[2:5], axis(), TINY_GRID, MODES, budget=100, master_seed=7, workers=1)


def test_sweep_rows_complete(small_sweep):
    assert len(small_sweep) == 3 * 1 * 2
    keys = {(r.motor_id, r.speed, r.acceleration, r.mode) for r in small_sweep.rows}
    assert len(keys) == len(small_sweep)
    for r in small_sweep.rows:
        m = next(m for m in SIMULATION_CATALOG if m.id == r.motor_id)
        expected = acceleration_capacity(m.max_torque, m.rotor_inertia_kgcm2, 45.5)[0]
        assert r.capacity == pytest.approx(expected, rel=1e-9)
        assert r.error == ""
        assert r.evaluations == 4 * 100


def test_shared_pool_sign(small_sweep):
    changes = relative_changes(small_sweep)
    assert len(changes) == 3
    assert all(c["relative_change"] >= 0 for c in changes)
    for r in small_sweep.select(mode=CONSTRAINED):
        assert r.feasible or r.fallback


def test_sweep_determinism_across_workers(small_sweep):
    again = run_sweep(SIMULATION_CATALOG[2:5], axis(), TINY_GRID, MODES, budget=100, master_seed=7, workers=2)
    assert again.rows == small_sweep.rows
    other = run_sweep(SIMULATION_CATALOG[2:3], axis(), TINY_GRID, MODES, budget=100, master_seed=8, workers=1)
    assert other.rows[0].seed_fwa != small_sweep.rows[0].seed_fwa


def test_selected_cells_keep_full_sweep_seeds():
    grid = ProcessGrid(speeds=(100.0, 200.0), accelerations=(5.0,), stroke=20.0, dwell=0.02)
    args = (SIMULATION_CATALOG[2:4], axis(), grid, (UNCONSTRAINED,))
    full = run_sweep(*args, budget=80, master_seed=5, workers=1)
    part = run_sweep(*args, budget=80, master_seed=5, workers=1, select=lambda v, a: v == 200.0)
    assert part.rows == tuple(r for r in full.rows if r.speed == 200.0)
    with pytest.raises(ValueError):
        run_sweep(*args, budget=80, workers=1, select=lambda v, a: False)


def test_trend_report_groups(small_sweep):
    report = trend_report(small_sweep)
    assert {e.mode for e in report} == set(MODES)
    for e in report:
        assert list(e.capacities) == sorted(e.capacities)
        assert e.shape in ("improving-then-flat", "interior-minimum", "monotone", "irregular")


def test_cell_failure_is_recorded(monkeypatch):
    import feeddrive.sweep as sweep_mod

    def boom(*args, **kwargs):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(sweep_mod, "tune", boom)
    res = run_sweep(SIMULATION_CATALOG[:1], axis(), TINY_GRID, (UNCONSTRAINED,), budget=100, workers=1)
    assert len(res) == 1 and "solver exploded" in res.rows[0].error
    assert math.isnan(res.rows[0].W)


def test_sweep_argument_checks():
    with pytest.raises(ValueError):
        run_sweep((), axis())
    with pytest.raises(ValueError):
        run_sweep(SIMULATION_CATALOG, axis(), modes=("bogus",))
    with pytest.raises(ValueError):
        run_sweep(SIMULATION_CATALOG, axis(), protocol="bogus")


def test_relative_changes_skip_undefined():
    base = dict(model="", speed=1.0, acceleration=1.0, capacity=0.3, capacity_table=0.5, inertia_ratio=1.0)
    rows = (SweepRow("1", mode=UNCONSTRAINED, W=0.0, **base), SweepRow("1", mode=CONSTRAINED, W=1.0, **base))
    assert relative_changes(SweepResult(rows, 0, 10, "shared"))[0]["relative_change"] is None
