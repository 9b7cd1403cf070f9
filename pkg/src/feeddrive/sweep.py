"""Motor catalog x motion process sweeps of tuned servo performance.

Each (motor, process) cell builds the plant with the motor's rotor inertia
and peak torque, plans the reciprocating stroke, tunes the gains with both
metaheuristics and records the best gains per constraint mode.

Under the default ``shared`` protocol both modes pick from one pool of
evaluated candidates per cell (the union of every search run in the cell):
the unconstrained row is the pool minimum of raw W, the constrained row is
the minimum raw W among candidates meeting the stability constraints. The
constrained W can therefore never beat the unconstrained one.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .frequency import DEFAULT_GRID, FrequencyGrid, check_constraints
from .motion import plan, reciprocate
from .optimize.space import SearchSpace
from .optimize.tuning import CONSTRAINED, MODES, UNCONSTRAINED, ScenarioObjective, TuningScenario, cross_validate, tune
from .plant import KGCM2, MechanicalParams, acceleration_capacity, kgcm2
from .simulation import SimConfig

PROTOCOLS = ("shared", "independent")
FLATNESS_BAND = 0.1
SHAPES = ("improving-then-flat", "interior-minimum", "monotone", "irregular", "inconclusive")


@dataclass(frozen=True)
class MotorSpec:
    """Catalog entry. Torque in N*m, rotor inertia in kg*cm^2, power in kW.

    ``declared_ratio`` and ``declared_capacity`` hold printed catalog values
    used only for consistency checks.
    """

    id: str
    model: str
    max_torque: float
    rotor_inertia_kgcm2: float
    rated_power_kw: float | None = None
    declared_ratio: float | None = None
    declared_capacity: float | None = None

    def __post_init__(self):
        if not (self.max_torque > 0 and math.isfinite(self.max_torque)):
            raise ValueError(f"motor {self.id}: max_torque must be positive")
        if not (self.rotor_inertia_kgcm2 > 0 and math.isfinite(self.rotor_inertia_kgcm2)):
            raise ValueError(f"motor {self.id}: rotor_inertia_kgcm2 must be positive")
        if self.rated_power_kw is not None and not self.rated_power_kw > 0:
            raise ValueError(f"motor {self.id}: rated_power_kw must be positive")


# load inertia 45.5 kg*cm^2
SIMULATION_CATALOG = (
    MotorSpec("1", "ISMH3-44C15CD", 71.1, 88.9, None, 0.5, 0.53),
    MotorSpec("2", "ISMH3-29C15CD", 37.2, 55.0, None, 0.8, 0.37),
    MotorSpec("3", "ISMH3-18C15CD", 28.75, 25.5, None, 1.8, 0.40),
    MotorSpec("4", "ISMH3-13C15CD", 20.85, 19.3, None, 2.4, 0.32),
    MotorSpec("5", "ISMH3-85B15CD", 13.5, 13.0, None, 3.5, 0.23),
    MotorSpec("6", "1MH3-50B15CB", 9.6, 11.01, None, 4.1, 0.17),
)
SIMULATION_LOAD_INERTIA = 45.5

# bench motors, load inertia 48 kg*cm^2
BENCH_CATALOG = (
    MotorSpec("A", "ISMH3-29C15CD", 37.2, 55.0, 2.9, None, 0.36),
    MotorSpec("B", "ISMH3-18C15CD", 28.75, 25.5, 1.8, None, 0.40),
    MotorSpec("C", "ISMH3-85B15CD", 13.5, 13.0, 0.85, None, 0.22),
)
BENCH_LOAD_INERTIA = 48.0


@dataclass(frozen=True)
class ProcessGrid:
    """Reciprocating motion processes: speeds in mm/s, accelerations in m/s^2."""

    speeds: tuple = (100.0, 200.0, 400.0)
    accelerations: tuple = (1.0, 2.0, 5.0)
    stroke: float = 200.0
    cycles: int = 1
    dwell: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "speeds", tuple(float(v) for v in self.speeds))
        object.__setattr__(self, "accelerations", tuple(float(a) for a in self.accelerations))
        if not self.speeds or not self.accelerations:
            raise ValueError("process grid needs at least one speed and one acceleration")
        if any(not v > 0 for v in self.speeds + self.accelerations):
            raise ValueError("speeds and accelerations must be positive")
        if not self.stroke > 0:
            raise ValueError("stroke must be positive")
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ValueError("cycles must be a positive integer")
        if self.dwell < 0:
            raise ValueError("dwell must be >= 0")

    def cells(self) -> list:
        """(speed, acceleration) pairs, speed-major."""
        return [(v, a) for v in self.speeds for a in self.accelerations]

    def trajectory(self, speed: float, acceleration: float, dt: float):
        profile = plan(self.stroke, speed, acceleration * 1000.0)
        return reciprocate(profile, int(self.cycles), self.dwell, dt)


def inertia_ratio(motor: MotorSpec, load_inertia_Jl: float) -> float:
    """r = Jl / Jm, both in kg*cm^2."""
    if not load_inertia_Jl > 0:
        raise ValueError("load inertia must be positive")
    return load_inertia_Jl / motor.rotor_inertia_kgcm2


def capacity_from_ratio(torque_over_Jm: float, r: float) -> float:
    """(T/Jm) / (r + 1), which equals T / (Jm + Jl) when r = Jl/Jm."""
    if r < 0:
        raise ValueError("inertia ratio must be >= 0")
    return torque_over_Jm / (r + 1.0)


def motor_params(motor: MotorSpec, template: MechanicalParams) -> MechanicalParams:
    """``template`` with the motor's rotor inertia and peak torque."""
    return dataclasses.replace(template, motor_inertia_Jm=kgcm2(motor.rotor_inertia_kgcm2),
                               max_torque_Tmax=motor.max_torque)


def relative_change(W_stable: float, W_unstable: float) -> float:
    """(W_stable - W_unstable) / W_unstable."""
    if not W_unstable > 0:
        raise ValueError(f"W_unstable must be positive, got {W_unstable!r}")
    return (W_stable - W_unstable) / W_unstable


ROW_FIELDS = (
    "motor_id", "model", "speed", "acceleration", "capacity", "capacity_table", "inertia_ratio",
    "mode", "kp", "kvp", "kvi", "kfv", "W", "max_err_p", "max_err_v", "vars_v",
    "Am", "Pm", "Mr", "feasible", "diverged", "fallback", "xval_agree", "xval_gap",
    "consensus", "seed_fwa", "seed_ga", "evaluations", "error",
)


@dataclass(frozen=True)
class SweepRow:
    motor_id: str
    model: str
    speed: float
    acceleration: float
    capacity: float  # T/(Jm+Jl), N*m per kg*cm^2
    capacity_table: float  # capacity * R
    inertia_ratio: float
    mode: str
    kp: float = math.nan
    kvp: float = math.nan
    kvi: float = math.nan
    kfv: float = math.nan
    W: float = math.nan
    max_err_p: float = math.nan
    max_err_v: float = math.nan
    vars_v: float = math.nan
    Am: float = math.nan
    Pm: float = math.nan
    Mr: float = math.nan
    feasible: bool = False
    diverged: bool = False
    fallback: bool = False  # constrained row taken from an infeasible candidate
    xval_agree: bool = False
    xval_gap: float = math.nan
    consensus: str = ""
    seed_fwa: int = 0
    seed_ga: int = 0
    evaluations: int = 0
    error: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class SweepResult:
    rows: tuple
    master_seed: int | None
    budget: int
    protocol: str
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def select(self, speed=None, acceleration=None, mode=None, motor_id=None) -> list:
        return [r for r in self.rows
                if (speed is None or r.speed == speed)
                and (acceleration is None or r.acceleration == acceleration)
                and (mode is None or r.mode == mode)
                and (motor_id is None or r.motor_id == motor_id)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_rows_csv(fh, self.rows)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def write_rows_csv(fh, rows) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ROW_FIELDS)
    for row in rows:
        d = row.to_dict()
        writer.writerow([format_value(d[k]) for k in ROW_FIELDS])


# ---------------------------------------------------------------- cell work

@dataclass(frozen=True)
class _CellJob:
    index: int
    motor: MotorSpec
    template: MechanicalParams
    process: ProcessGrid
    speed: float
    acceleration: float
    sim: SimConfig
    grid: FrequencyGrid
    modes: tuple
    budget: int
    seeds: tuple
    protocol: str
    tolerance: float
    space: SearchSpace | None = None


def _cell_seeds(master_seed, n_cells: int) -> list:
    children = np.random.SeedSequence(master_seed).spawn(n_cells)
    return [tuple(int(v) for v in child.generate_state(2)) for child in children]


def _base_row(job: _CellJob, mode: str) -> dict:
    jl = job.template.load_inertia_Jl / KGCM2
    rotor, table = acceleration_capacity(job.motor.max_torque, job.motor.rotor_inertia_kgcm2, jl,
                                         job.template.drive_coeff_R)
    return dict(motor_id=job.motor.id, model=job.motor.model, speed=job.speed,
                acceleration=job.acceleration, capacity=rotor, capacity_table=table,
                inertia_ratio=inertia_ratio(job.motor, jl), mode=mode,
                seed_fwa=job.seeds[0], seed_ga=job.seeds[1])


def _row_from(base: dict, evaluation, objective: ScenarioObjective, xval, fallback: bool,
              evaluations: int) -> SweepRow:
    st = objective.stability(evaluation.gains)
    g = evaluation.gains
    rep = evaluation.report
    return SweepRow(
        **base, kp=g.kp, kvp=g.kvp, kvi=g.kvi, kfv=g.kfv, W=evaluation.W,
        max_err_p=rep.max_err_p if rep else math.nan,
        max_err_v=rep.max_err_v if rep else math.nan,
        vars_v=rep.vars_v if rep else math.nan,
        Am=float(st.gain_margin_Am), Pm=float(st.phase_margin_Pm), Mr=float(st.resonance_peak_Mr),
        feasible=check_constraints(st).feasible, diverged=evaluation.diverged, fallback=fallback,
        xval_agree=xval.agree, xval_gap=xval.relative_gap, consensus=xval.consensus,
        evaluations=evaluations)


def _pick_unconstrained(pool):
    return min(range(len(pool)), key=lambda i: pool[i][1].W)


def _pick_constrained(pool, objective: ScenarioObjective):
    """Lowest raw W among feasible candidates, else lowest penalized value."""
    order = sorted(range(len(pool)), key=lambda i: pool[i][1].W)
    for i in order:
        ev = pool[i][1]
        if not ev.diverged and check_constraints(objective.stability(ev.gains)).feasible:
            return i, False
    best = min(order, key=lambda i: objective.value(pool[i][1], CONSTRAINED))
    return best, True


def _run_cell(job: _CellJob) -> list:
    try:
        return _run_cell_unchecked(job)
    except Exception as exc:  # a failing cell must not abort the sweep
        return [SweepRow(**_base_row(job, mode), error=f"{type(exc).__name__}: {exc}")
                for mode in job.modes]


def _run_cell_unchecked(job: _CellJob) -> list:
    params = motor_params(job.motor, job.template)
    trajectory = job.process.trajectory(job.speed, job.acceleration, job.sim.dt)
    scenario = TuningScenario(params, trajectory, job.sim, UNCONSTRAINED, job.grid)
    seed_fwa, seed_ga = job.seeds

    runs = {}
    for mode in job.modes:
        sc = scenario.with_mode(mode)
        runs[mode] = (tune(sc, "fwa", job.budget, seed_fwa, job.space),
                      tune(sc, "ga", job.budget, seed_ga, job.space))
    # one objective instance supplies cached stability reports and penalties
    judge = ScenarioObjective(scenario, CONSTRAINED)

    rows = []
    for mode in job.modes:
        fwa, ga = runs[mode]
        xval = cross_validate(fwa, ga, job.tolerance)
        if job.protocol == "shared":
            pool = [(m, ev) for m in job.modes for r in runs[m] for ev in r.evaluations]
        else:
            pool = [(mode, ev) for r in runs[mode] for ev in r.evaluations]
        if mode == UNCONSTRAINED:
            idx, fallback = _pick_unconstrained(pool), False
        else:
            idx, fallback = _pick_constrained(pool, judge)
        rows.append(_row_from(_base_row(job, mode), pool[idx][1], judge, xval, fallback, len(pool)))
    return rows


def run_sweep(catalog, mech: MechanicalParams, grid: ProcessGrid | None = None, modes=MODES,
              budget: int = 3000, master_seed: int | None = 0, *, sim: SimConfig | None = None,
              freq_grid: FrequencyGrid = DEFAULT_GRID, protocol: str = "shared",
              tolerance: float = 0.05, space: SearchSpace | None = None,
              workers: int | None = None, progress=None, select=None) -> SweepResult:
    """Tune every (motor, process) cell and collect one row per constraint mode.

    Parameters
    ----------
    catalog : sequence of MotorSpec
    mech : MechanicalParams
        Template; its rotor inertia and peak torque are replaced per motor.
    modes : sequence of str
        Subset of ``("unconstrained", "stability_constrained")``.
    budget : int
        Evaluations per optimizer run. Each cell runs FWA and GA once per mode.
    master_seed : int
        Per-cell seeds are spawned from it, so results do not depend on
        ``workers`` or completion order.
    space : SearchSpace, optional
        Gain bounds; defaults to ``SearchSpace.gains()``.
    workers : int, optional
        Worker processes; defaults to the CPU count. 1 runs in-process.
    progress : callable, optional
        Called with (done, total) after each cell.
    select : callable, optional
        Predicate on (speed, acceleration). Skipped cells keep their seeds,
        so the selected rows equal those of the full sweep.
    """
    catalog = tuple(catalog)
    grid = grid or ProcessGrid()
    modes = tuple(modes)
    sim = sim or SimConfig()
    if not catalog:
        raise ValueError("catalog is empty")
    if not modes or any(m not in MODES for m in modes) or len(set(modes)) != len(modes):
        raise ValueError(f"modes must be distinct values from {MODES}")
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}")

    cells = [(motor, v, a) for motor in catalog for v, a in grid.cells()]
    seeds = _cell_seeds(master_seed, len(cells))
    jobs = [_CellJob(i, motor, mech, grid, v, a, sim, freq_grid, modes, int(budget), seeds[i],
                     protocol, tolerance, space) for i, (motor, v, a) in enumerate(cells)
            if select is None or select(v, a)]
    if not jobs:
        raise ValueError("select matched no cells")

    workers = workers or os.cpu_count() or 1
    results = {}
    if workers == 1:
        for k, job in enumerate(jobs):
            results[job.index] = _run_cell(job)
            if progress:
                progress(k + 1, len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, (job, rows) in enumerate(zip(jobs, pool.map(_run_cell, jobs))):
                results[job.index] = rows
                if progress:
                    progress(k + 1, len(jobs))
    rows = tuple(row for i in sorted(results) for row in results[i])
    meta = {"cells": len(jobs), "modes": list(modes), "tolerance": tolerance}
    return SweepResult(rows, master_seed, int(budget), protocol, meta)


# ----------------------------------------------------------- analysis

def relative_changes(sweep: SweepResult) -> list:
    """Per (motor, speed, acceleration): relative change of W from the constraints.

    Returns dicts with capacity and the change (None when undefined).
    """
    out = []
    unc = {(r.motor_id, r.speed, r.acceleration): r for r in sweep.select(mode=UNCONSTRAINED)}
    for r in sweep.select(mode=CONSTRAINED):
        u = unc.get((r.motor_id, r.speed, r.acceleration))
        if u is None:
            continue
        try:
            change = relative_change(r.W, u.W)
        except ValueError:
            change = None
        if change is not None and not math.isfinite(change):
            change = None
        out.append({"motor_id": r.motor_id, "speed": r.speed, "acceleration": r.acceleration,
                    "capacity": r.capacity, "W_stable": r.W, "W_unstable": u.W,
                    "relative_change": change})
    return out


def classify_curve(values, band: float = FLATNESS_BAND) -> str:
    """Shape of a W curve ordered by rising capacity.

    A point is "near the minimum" when |W - min| <= band * min.

    * all points near the minimum: ``monotone`` (flat)
    * first point not near it, and the near points form a contiguous tail of
      at least two: ``improving-then-flat``
    * minimum strictly inside and the last point above the band:
      ``interior-minimum``
    * non-increasing or non-decreasing: ``monotone``
    * anything else: ``irregular``; fewer than three points: ``inconclusive``
    """
    w = np.asarray(values, dtype=float)
    if len(w) < 3 or not np.all(np.isfinite(w)):
        return "inconclusive"
    w_min = float(w.min())
    near = np.abs(w - w_min) <= band * abs(w_min)
    if near.all():
        return "monotone"
    first_near = int(np.argmax(near))
    if not near[0] and near[first_near:].all() and len(w) - first_near >= 2:
        return "improving-then-flat"
    i_min = int(np.argmin(w))
    if 0 < i_min < len(w) - 1 and not near[-1]:
        return "interior-minimum"
    d = np.diff(w)
    if np.all(d <= 0) or np.all(d >= 0):
        return "monotone"
    return "irregular"


def late_degradation(values, band: float = FLATNESS_BAND) -> bool:
    """True when the highest-capacity point sits above the band around the minimum."""
    w = np.asarray(values, dtype=float)
    if len(w) < 2 or not np.all(np.isfinite(w)):
        return False
    w_min = float(w.min())
    return bool(w[-1] - w_min > band * abs(w_min))


@dataclass(frozen=True)
class TrendEntry:
    speed: float
    acceleration: float
    mode: str
    capacities: tuple
    motor_ids: tuple
    W: tuple
    shape: str
    late_degradation: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def trend_report(sweep: SweepResult, band: float = FLATNESS_BAND) -> list:
    """Classify W versus rotor-side capacity for every (speed, acceleration, mode)."""
    groups: dict = {}
    for r in sweep.rows:
        groups.setdefault((r.speed, r.acceleration, r.mode), []).append(r)
    out = []
    for (v, a, mode), rows in groups.items():
        rows = sorted(rows, key=lambda r: r.capacity)
        w = [r.W for r in rows]
        out.append(TrendEntry(v, a, mode, tuple(r.capacity for r in rows),
                              tuple(r.motor_id for r in rows), tuple(w),
                              classify_curve(w, band), late_degradation(w, band)))
    return out
