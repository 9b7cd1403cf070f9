"""Gain tuning on a simulated scenario: objective, penalties, cross-validation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..controller import ControlGains
from ..frequency import DEFAULT_GRID, FrequencyGrid, StabilityReport, check_constraints, stability_report
from ..metrics import PerformanceReport
from ..motion import CommandTrajectory
from ..plant import MechanicalParams
from ..simulation import DivergenceError, SimConfig, simulate_report
from .fireworks import fireworks_search
from .island_ga import island_ga_search
from .space import SearchSpace

UNCONSTRAINED = "unconstrained"
CONSTRAINED = "stability_constrained"
MODES = (UNCONSTRAINED, CONSTRAINED)

PENALTY_WEIGHT = 1e4
DIVERGENCE_PENALTY = 1e6
VIOLATION_CAP = 10.0  # keeps an unstable loop (Mr = inf) at a finite penalty

ALGORITHMS = {
    "fwa": fireworks_search,
    "ga": island_ga_search,
}


@dataclass(frozen=True, eq=False)
class TuningScenario:
    params: MechanicalParams
    trajectory: CommandTrajectory
    sim: SimConfig
    constraint_mode: str = UNCONSTRAINED
    grid: FrequencyGrid = DEFAULT_GRID

    def __post_init__(self):
        if self.constraint_mode not in MODES:
            raise ValueError(f"constraint_mode must be one of {MODES}")

    def with_mode(self, mode: str) -> "TuningScenario":
        return TuningScenario(self.params, self.trajectory, self.sim, mode, self.grid)

    @property
    def key(self) -> str:
        """Digest of everything except the constraint mode."""
        h = hashlib.sha256()
        h.update(repr(self.params).encode())
        h.update(repr(self.sim).encode())
        h.update(repr((self.grid.min, self.grid.max, self.grid.count)).encode())
        h.update(self.trajectory.position.tobytes())
        h.update(self.trajectory.velocity.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Evaluation:
    """One simulated candidate. ``W`` is the raw score (divergence penalty if diverged)."""

    gains: ControlGains
    W: float
    report: PerformanceReport | None
    diverged: bool
    t_blowup: float | None = None


def divergence_penalty(err: DivergenceError) -> float:
    """>= 1e6, larger the earlier the run blew up."""
    early = 1.0 - err.t_blowup / err.duration if err.duration > 0 else 1.0
    return DIVERGENCE_PENALTY * (1.0 + min(max(early, 0.0), 1.0))


def constraint_penalty(report: StabilityReport) -> float:
    check = check_constraints(report)
    return PENALTY_WEIGHT * sum(min(v, VIOLATION_CAP) ** 2 for v in check.violations)


class ScenarioObjective:
    """Callable objective over gain vectors that remembers every evaluation.

    Stability reports are computed on demand and cached per gain vector, so
    the unconstrained search never pays for frequency analysis.
    """

    def __init__(self, scenario: TuningScenario, mode: str | None = None):
        self.scenario = scenario
        self.mode = mode or scenario.constraint_mode
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.evaluations: list[Evaluation] = []
        self._stability: dict = {}

    def simulate(self, gains: ControlGains) -> Evaluation:
        s = self.scenario
        try:
            report = simulate_report(s.params, gains, s.trajectory, s.sim)
        except DivergenceError as err:
            return Evaluation(gains, divergence_penalty(err), None, True, err.t_blowup)
        return Evaluation(gains, report.W, report, False)

    def stability(self, gains: ControlGains) -> StabilityReport:
        key = (gains.kp, gains.kvp, gains.kvi, gains.kfv)
        hit = self._stability.get(key)
        if hit is None:
            hit = stability_report(self.scenario.params, gains, self.scenario.grid,
                                   self.scenario.sim.velocity_feedback)
            self._stability[key] = hit
        return hit

    def value(self, evaluation: Evaluation, mode: str | None = None) -> float:
        mode = mode or self.mode
        if mode == UNCONSTRAINED:
            return evaluation.W
        return evaluation.W + constraint_penalty(self.stability(evaluation.gains))

    def __call__(self, x) -> float:
        evaluation = self.simulate(ControlGains.from_array(x))
        self.evaluations.append(evaluation)
        return self.value(evaluation)


def penalized_objective(gains: ControlGains, scenario: TuningScenario) -> float:
    """W, plus 1e4 * sum(normalized violation^2) in stability-constrained mode."""
    objective = ScenarioObjective(scenario)
    return objective.value(objective.simulate(gains))


@dataclass(frozen=True, eq=False)
class OptimizerResult:
    algorithm: str
    mode: str
    best_gains: ControlGains
    best_W: float
    best_value: float
    best_report: PerformanceReport | None
    best_stability: StabilityReport
    evaluations_used: int
    history: tuple
    seed: int | None
    scenario_key: str
    evaluations: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "mode": self.mode,
            "best_gains": self.best_gains.to_dict(),
            "best_W": self.best_W,
            "best_value": self.best_value,
            "best_report": None if self.best_report is None else self.best_report.to_dict(),
            "best_stability": self.best_stability.to_dict(),
            "evaluations_used": self.evaluations_used,
            "seed": self.seed,
            "scenario_key": self.scenario_key,
        }


def tune(scenario: TuningScenario, algorithm: str = "fwa", budget: int = 3000, seed=None,
         space: SearchSpace | None = None, **options) -> OptimizerResult:
    """Run one metaheuristic on ``scenario`` in its constraint mode."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {sorted(ALGORITHMS)}")
    space = space or SearchSpace.gains()
    objective = ScenarioObjective(scenario)
    result = ALGORITHMS[algorithm](objective, space, budget, seed, **options)
    best_idx = int(np.argmin(result.values))
    best = objective.evaluations[best_idx]
    return OptimizerResult(
        algorithm=algorithm,
        mode=scenario.constraint_mode,
        best_gains=best.gains,
        best_W=best.W,
        best_value=float(result.values[best_idx]),
        best_report=best.report,
        best_stability=objective.stability(best.gains),
        evaluations_used=result.evaluations_used,
        history=result.history,
        seed=seed,
        scenario_key=scenario.key,
        evaluations=objective.evaluations,
    )


@dataclass(frozen=True)
class CrossValidation:
    agree: bool
    relative_gap: float
    tolerance: float
    value_fwa: float
    value_ga: float
    gains_fwa: ControlGains
    gains_ga: ControlGains
    consensus: str  # algorithm holding the better value
    consensus_gains: ControlGains

    def to_dict(self) -> dict:
        return {
            "agree": self.agree,
            "relative_gap": self.relative_gap,
            "tolerance": self.tolerance,
            "value_fwa": self.value_fwa,
            "value_ga": self.value_ga,
            "gains_fwa": self.gains_fwa.to_dict(),
            "gains_ga": self.gains_ga.to_dict(),
            "consensus": self.consensus,
            "consensus_gains": self.consensus_gains.to_dict(),
        }


def cross_validate(result_fwa: OptimizerResult, result_ga: OptimizerResult,
                   tolerance: float = 0.05, eps: float = 1e-9) -> CrossValidation:
    """Agreement when |a - b| / max(min(a, b), eps) <= tolerance."""
    if result_fwa.scenario_key != result_ga.scenario_key or result_fwa.mode != result_ga.mode:
        raise ValueError("results come from different scenarios")
    a, b = result_fwa.best_value, result_ga.best_value
    gap = abs(a - b) / max(min(a, b), eps)
    better = result_fwa if a <= b else result_ga
    return CrossValidation(bool(gap <= tolerance), float(gap), tolerance, a, b,
                           result_fwa.best_gains, result_ga.best_gains,
                           better.algorithm, better.best_gains)
