"""Controller gain tuning with a fireworks algorithm and an island GA."""

from .base import SearchResult
from .fireworks import fireworks_search
from .island_ga import island_ga_search
from .space import SearchSpace
from .tuning import (CONSTRAINED, MODES, UNCONSTRAINED, CrossValidation, Evaluation, OptimizerResult,
                     ScenarioObjective, TuningScenario, cross_validate, penalized_objective, tune)

__all__ = [
    "SearchResult", "SearchSpace", "fireworks_search", "island_ga_search",
    "CONSTRAINED", "MODES", "UNCONSTRAINED", "CrossValidation", "Evaluation", "OptimizerResult",
    "ScenarioObjective", "TuningScenario", "cross_validate", "penalized_objective", "tune",
]
