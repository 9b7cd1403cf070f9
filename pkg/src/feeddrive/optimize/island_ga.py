"""Real-coded island-model GA with ring migration."""

from __future__ import annotations

import numpy as np

from .base import BudgetedObjective, SearchResult
from .space import SearchSpace


def _tournament(rng, fitness: np.ndarray, size: int) -> int:
    picks = rng.integers(len(fitness), size=size)
    return int(picks[np.argmin(fitness[picks])])


def island_ga_search(objective, space: SearchSpace, budget: int, seed=None, *,
                     n_islands: int = 4, island_size: int = 20, tournament_size: int = 2,
                     crossover_rate: float = 0.9, blend_alpha: float = 0.5,
                     mutation_rate: float = 0.1, mutation_sigma: float = 0.1,
                     migration_interval: int | None = 10, n_migrants: int = 2,
                     n_elite: int = 1) -> SearchResult:
    """Minimize ``objective`` with ``n_islands`` independently evolving subpopulations.

    Per island and generation: the ``n_elite`` best survive unchanged; the rest
    are offspring of size-2 tournaments, BLX-alpha crossover and per-gene
    Gaussian mutation (sigma as a fraction of the range), clipped to bounds.
    Every ``migration_interval`` generations each island's best ``n_migrants``
    overwrite the worst of the next island in the ring. ``None`` or 0
    disables migration.
    """
    total = n_islands * island_size
    if budget < total:
        raise ValueError(f"budget ({budget}) must cover the initial population ({total})")
    rng = np.random.default_rng(seed)
    evaluate = BudgetedObjective(objective, space, budget)
    lo, hi = space.enc_lower, space.enc_upper
    span = hi - lo
    d = space.dim

    pops = [rng.uniform(lo, hi, size=(island_size, d)) for _ in range(n_islands)]
    fits = [evaluate(p) for p in pops]
    history = [evaluate.best_value]
    generation = 0

    while evaluate.remaining > 0:
        generation += 1
        # draw every island's offspring before evaluating any of them
        offspring = []
        for pop, fit in zip(pops, fits):
            children = np.empty((island_size - n_elite, d))
            for c in range(len(children)):
                a = pop[_tournament(rng, fit, tournament_size)]
                if rng.random() < crossover_rate:
                    b = pop[_tournament(rng, fit, tournament_size)]
                    low, high = np.minimum(a, b), np.maximum(a, b)
                    spread = blend_alpha * (high - low)
                    child = rng.uniform(low - spread, high + spread)
                else:
                    child = a.copy()
                mutate = rng.random(d) < mutation_rate
                child[mutate] += rng.normal(0.0, mutation_sigma * span[mutate])
                children[c] = np.clip(child, lo, hi)
            offspring.append(children)

        for k in range(n_islands):
            children = offspring[k][:evaluate.remaining]
            child_fit = evaluate(children) if len(children) else np.empty(0)
            order = np.argsort(fits[k], kind="stable")
            elite = order[:n_elite]
            fill = order[n_elite:n_elite + (island_size - n_elite - len(children))]
            pops[k] = np.vstack([pops[k][elite], children, pops[k][fill]])
            fits[k] = np.concatenate([fits[k][elite], child_fit, fits[k][fill]])

        if migration_interval and generation % migration_interval == 0 and n_islands > 1:
            movers = []
            for pop, fit in zip(pops, fits):
                best = np.argsort(fit, kind="stable")[:n_migrants]
                movers.append((pop[best].copy(), fit[best].copy()))
            for k in range(n_islands):
                src_pop, src_fit = movers[k - 1]
                worst = np.argsort(fits[k], kind="stable")[::-1][:n_migrants]
                pops[k][worst] = src_pop
                fits[k][worst] = src_fit

        history.append(evaluate.best_value)

    return evaluate.result("ga", history, seed)
