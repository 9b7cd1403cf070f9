"""Fireworks algorithm (explosion sparks + Gaussian sparks, elitist selection).

The best firework ("core") uses a dynamic amplitude that grows after a
generation that improved the best value and shrinks otherwise.
"""

from __future__ import annotations

import numpy as np

from .base import BudgetedObjective, SearchResult, redraw_out_of_bounds
from .space import SearchSpace


def _pick_dims(rng, d: int) -> np.ndarray:
    mask = rng.random(d) < 0.5
    if not mask.any():
        mask[rng.integers(d)] = True
    return mask


def fireworks_search(objective, space: SearchSpace, budget: int, seed=None, *,
                     n_fireworks: int = 5, total_sparks: int = 50, min_sparks: int = 2,
                     max_sparks: int = 20, amplitude_frac: float = 0.4,
                     n_gaussian: int = 5, dynamic_core: bool = True,
                     core_amplify: float = 1.2, core_reduce: float = 0.9) -> SearchResult:
    """Minimize ``objective`` over ``space`` with at most ``budget`` evaluations.

    Each generation a firework i with value f_i throws

        s_i = clip(round(m * (f_max - f_i + eps) / sum(f_max - f + eps)), min_sparks, max_sparks)

    explosion sparks with amplitude

        A_i = amplitude_frac * range * (f_i - f_min + eps) / sum(f - f_min + eps),

    so good fireworks search densely and close, poor ones sparsely and wide.
    The formula gives the best firework a vanishing amplitude, so it instead
    carries its own amplitude: multiplied by ``core_amplify`` after a
    generation that lowered the best value, by ``core_reduce`` otherwise.
    ``dynamic_core=False`` restores the plain formula.
    Gaussian sparks pull random coordinates of a firework towards (or past)
    the current best. Out-of-bounds coordinates are redrawn uniformly. The
    best location survives; the rest of the next generation is drawn at
    random from the remaining candidates.
    """
    if budget < n_fireworks:
        raise ValueError(f"budget ({budget}) must be at least the number of fireworks ({n_fireworks})")
    rng = np.random.default_rng(seed)
    evaluate = BudgetedObjective(objective, space, budget)
    lo, hi = space.enc_lower, space.enc_upper
    span = hi - lo
    d = space.dim
    eps = np.finfo(float).eps

    fireworks = rng.uniform(lo, hi, size=(n_fireworks, d))
    fitness = evaluate(fireworks)
    history = [evaluate.best_value]
    core_amplitude = amplitude_frac

    while evaluate.remaining > 0:
        f = np.where(np.isfinite(fitness), fitness, np.finfo(float).max / 1e3)
        f_max, f_min = f.max(), f.min()
        counts = total_sparks * (f_max - f + eps) / ((f_max - f).sum() + eps)
        counts = np.clip(np.round(counts), min_sparks, max_sparks).astype(int)
        amplitudes = amplitude_frac * (f - f_min + eps) / ((f - f_min).sum() + eps)
        if dynamic_core:
            amplitudes[np.argmin(f)] = core_amplitude

        sparks = []
        for i in range(n_fireworks):
            for _ in range(counts[i]):
                z = fireworks[i].copy()
                dims = _pick_dims(rng, d)
                z[dims] += amplitudes[i] * rng.uniform(-1.0, 1.0) * span[dims]
                sparks.append(redraw_out_of_bounds(rng, z, lo, hi))
        best = fireworks[np.argmin(fitness)]
        for _ in range(n_gaussian):
            z = fireworks[rng.integers(n_fireworks)].copy()
            dims = _pick_dims(rng, d)
            z[dims] += (best[dims] - z[dims]) * rng.normal(0.0, 1.0)
            sparks.append(redraw_out_of_bounds(rng, z, lo, hi))

        sparks = np.array(sparks[:evaluate.remaining])
        before = fitness.min()
        spark_fitness = evaluate(sparks)
        core_amplitude *= core_amplify if spark_fitness.min() < before else core_reduce
        core_amplitude = min(core_amplitude, 1.0)

        pool = np.vstack([fireworks, sparks])
        pool_fitness = np.concatenate([fitness, spark_fitness])
        keep = int(np.argmin(pool_fitness))
        rest = np.delete(np.arange(len(pool)), keep)
        chosen = rng.choice(rest, size=min(n_fireworks - 1, len(rest)), replace=False)
        idx = np.concatenate([[keep], chosen])
        fireworks, fitness = pool[idx], pool_fitness[idx]
        history.append(evaluate.best_value)

    return evaluate.result("fwa", history, seed)
