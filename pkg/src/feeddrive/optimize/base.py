"""Budget accounting and result container shared by both metaheuristics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .space import SearchSpace


@dataclass(frozen=True, eq=False)
class SearchResult:
    algorithm: str
    best_x: np.ndarray
    best_value: float
    evaluations_used: int
    history: tuple
    seed: int | None
    candidates: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)


class BudgetedObjective:
    """Wraps an objective over decoded points and stops at ``budget`` calls."""

    def __init__(self, objective, space: SearchSpace, budget: int):
        self.objective = objective
        self.space = space
        self.budget = int(budget)
        self.used = 0
        self.best_value = np.inf
        self.best_x = None
        self._xs = []
        self._fs = []

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def __call__(self, encoded: np.ndarray) -> np.ndarray:
        """Evaluate rows of ``encoded``; callers must not exceed ``remaining``."""
        encoded = np.atleast_2d(encoded)
        if len(encoded) > self.remaining:
            raise RuntimeError("evaluation budget exceeded")
        out = np.empty(len(encoded))
        for i, z in enumerate(encoded):
            x = self.space.decode(z)
            f = float(self.objective(x))
            if not np.isfinite(f):
                f = np.inf
            out[i] = f
            self._xs.append(x)
            self._fs.append(f)
            if f < self.best_value:
                self.best_value, self.best_x = f, x
        self.used += len(encoded)
        return out

    def result(self, algorithm: str, history, seed) -> SearchResult:
        return SearchResult(algorithm, self.best_x, float(self.best_value), self.used, tuple(history),
                            seed, np.array(self._xs), np.array(self._fs))


def redraw_out_of_bounds(rng, z: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Replace coordinates outside ``[lo, hi]`` with uniform draws inside."""
    bad = (z < lo) | (z > hi)
    if bad.any():
        z = z.copy()
        z[bad] = rng.uniform(lo[bad], hi[bad])
    return z
