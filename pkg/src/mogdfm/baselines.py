"""NSGA-II over discrete sequences and a random-sampling baseline.

Both count every objective evaluation exactly so they can be compared with
guided sampling at an equal evaluation budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RunConfig, ScoreFunction, derive_rng
from .errors import InvalidArgumentError
from .pareto import ParetoFront, crowding_distance, hypervolume, non_dominated_sort, pareto_mask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GAConfig:
    """Settings for :func:`nsga2_run`. ``mutation_rate`` is per token."""

    population: int = 64
    generations: int = 100
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9
    tournament_size: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise InvalidArgumentError("population must be even and >= 4")
        if self.generations < 0:
            raise InvalidArgumentError("generations must be >= 0")
        for name in ("mutation_rate", "crossover_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v}")
        if not 1 <= self.tournament_size <= self.population:
            raise InvalidArgumentError("tournament_size must be in [1, population]")


class CountingEvaluator:
    """Evaluates sequence batches and counts single objective calls."""

    def __init__(self, fns: Sequence[ScoreFunction]):
        if len(fns) == 0:
            raise InvalidArgumentError("at least one objective is required")
        self.fns = list(fns)
        self.calls = 0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        cols = []
        for fn in self.fns:
            batch = getattr(fn, "evaluate_batch", None)
            if batch is not None:
                cols.append(np.asarray(batch(X), dtype=float))
            else:
                cols.append(np.array([float(fn.evaluate(x)) for x in X]))
        self.calls += X.shape[0] * len(self.fns)
        return np.column_stack(cols)


@dataclass
class GAResult:
    population: np.ndarray
    objectives: np.ndarray
    front: ParetoFront
    evaluations: int
    history: list = field(default_factory=list)  # first-front objective arrays, one per generation

    def hypervolume_history(self, ref, upper=None) -> np.ndarray:
        """Front hypervolume per generation (generation 0 is the initial population).

        For four or more objectives every generation shares one Monte Carlo
        box and sample stream, so the curve keeps the exact ordering of the
        underlying sets.
        """
        if upper is None:
            upper = np.vstack(self.history).max(axis=0)
        return np.array([hypervolume(F, ref, upper=upper) for F in self.history])


def _rank_and_crowding(F: np.ndarray):
    rank = np.empty(F.shape[0], dtype=np.int64)
    crowd = np.empty(F.shape[0])
    fronts = non_dominated_sort(F)
    for r, members in enumerate(fronts):
        rank[members] = r
        crowd[members] = crowding_distance(F[members])
    return rank, crowd, fronts


def _tournament(rng, rank, crowd, size, k):
    entrants = rng.integers(rank.size, size=(k, size))
    winners = np.empty(k, dtype=np.int64)
    for row, idx in enumerate(entrants):
        # lower rank wins, then larger crowding distance, then the earlier draw
        best = idx[0]
        for j in idx[1:]:
            if rank[j] < rank[best] or (rank[j] == rank[best] and crowd[j] > crowd[best]):
                best = j
        winners[row] = best
    return winners


def _vary(rng, parents: np.ndarray, cfg: GAConfig, K: int) -> np.ndarray:
    n, d = parents.shape
    children = parents.copy()
    for a in range(0, n, 2):
        if d > 1 and rng.random() < cfg.crossover_rate:
            cut = int(rng.integers(1, d))
            children[a, cut:], children[a + 1, cut:] = parents[a + 1, cut:], parents[a, cut:]
    flip = rng.random(children.shape) < cfg.mutation_rate
    # shifting by 1..K-1 modulo K picks uniformly among the other tokens
    shift = rng.integers(1, K, size=children.shape)
    children[flip] = (children[flip] + shift[flip]) % K
    return children


def _environmental_selection(F: np.ndarray, size: int, protected_from: np.ndarray) -> np.ndarray:
    """Indices of the survivors: whole fronts first, crowding inside the last one.

    When the first front alone overflows, members that cover the previous
    generation's front are kept before any crowding cut, so the surviving
    front weakly dominates the old one.
    """
    rank, crowd, fronts = _rank_and_crowding(F)
    chosen: list[int] = []
    for r, members in enumerate(fronts):
        if len(chosen) + len(members) <= size:
            chosen.extend(members)
            continue
        members = np.asarray(members)
        first = []
        if r == 0:
            for q in protected_from:
                if rank[q] == 0:
                    cover = q
                else:
                    covers = members[np.all(F[members] >= F[q], axis=1)]
                    cover = int(covers[0])
                if cover not in first:
                    first.append(int(cover))
        rest = [m for m in members[np.argsort(-crowd[members], kind="stable")] if m not in first]
        chosen.extend((first + rest)[: size - len(chosen)])
        break
    return np.asarray(chosen, dtype=np.int64)


def nsga2_run(cfg: GAConfig, fns: Sequence[ScoreFunction], d: int, K: int) -> GAResult:
    """Elitist NSGA-II: tournament on (front rank, crowding), one-point crossover, token mutation."""
    if d < 1 or K < 2:
        raise InvalidArgumentError("need d >= 1 and K >= 2")
    rng = derive_rng(cfg.seed, 0, "nsga2")
    evaluate = CountingEvaluator(fns)
    P = rng.integers(K, size=(cfg.population, d))
    F = evaluate(P)
    history = [F[pareto_mask(F)]]
    for _ in range(cfg.generations):
        rank, crowd, fronts = _rank_and_crowding(F)
        parents = P[_tournament(rng, rank, crowd, cfg.tournament_size, cfg.population)]
        children = _vary(rng, parents, cfg, K)
        R = np.vstack([P, children])
        FR = np.vstack([F, evaluate(children)])
        keep = _environmental_selection(FR, cfg.population, np.asarray(fronts[0]))
        P, F = R[keep], FR[keep]
        history.append(F[pareto_mask(F)])
    mask = pareto_mask(F)
    return GAResult(P, F, ParetoFront(P[mask], F[mask]), evaluate.calls, history)


def random_search(fns: Sequence[ScoreFunction], d: int, K: int, budget: int, seed: int = 0) -> ParetoFront:
    """Front of ``budget // N`` uniformly random sequences."""
    evaluate = CountingEvaluator(fns)
    n = budget // len(evaluate.fns)
    if n < 1:
        raise InvalidArgumentError("budget too small for a single evaluation of every objective")
    X = derive_rng(seed, 0, "random_search").integers(K, size=(n, d))
    F = evaluate(X)
    mask = pareto_mask(F)
    return ParetoFront(X[mask], F[mask])


def guided_budget(config: RunConfig, n_objectives: int, K: int, count: int) -> int:
    """Nominal objective calls of ``count`` guided runs: ``T (K-1) N`` each."""
    guided = n_objectives if config.guided is None else sum(config.guided)
    return count * config.T * (K - 1) * guided


def equal_budget_report(config: RunConfig, base, fns, d: int, count: int, ref,
                        population: int = 64, seed: int = 0, trajectories=None) -> dict:
    """Hypervolume of guided sampling, NSGA-II and random search at one evaluation budget.

    The GA gets as many generations as the guided batch's nominal budget
    allows. ``trajectories`` reuses an existing guided batch.
    """
    from .sampler import batch_generate

    K = base.K
    N = len(fns)
    budget = guided_budget(config, N, K, count)
    if trajectories is None:
        trajectories = batch_generate(config, base, fns, d, count)
    Fg = np.array([tr.final_objectives for tr in trajectories])
    generations = max(0, budget // (population * N) - 1)
    ga = nsga2_run(GAConfig(population=population, generations=generations, seed=seed), fns, d, K)
    rs = random_search(fns, d, K, budget, seed)
    return {
        "budget": int(budget),
        "reference_point": [float(v) for v in np.asarray(ref, dtype=float)],
        "mogdfm": {"runs": count, "evaluations": int(sum(tr.evaluations for tr in trajectories)),
                   "hypervolume": hypervolume(Fg, ref), "front_size": int(pareto_mask(Fg).sum())},
        "nsga2": {"population": population, "generations": int(generations), "evaluations": ga.evaluations,
                  "hypervolume": hypervolume(ga.front.objectives, ref), "front_size": len(ga.front)},
        "random": {"evaluations": int((budget // N) * N), "hypervolume": hypervolume(rs.objectives, ref),
                   "front_size": len(rs)},
    }
