"""The guided sampling loop and batch orchestration.

Each iteration picks one position uniformly at random, scores every
replacement token, filters the candidates through the hypercone, and lets an
exponential-Euler draw on the guided rates decide whether the chosen
replacement happens.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RunConfig, ScoreFunction, derive_rng, evaluate_all
from .dfm import mixture_velocity
from .errors import InvalidArgumentError, InvariantError
from .guidance import reweight_velocity, score_candidates
from .hypercone import (
    HyperconeState,
    OutcomeKind,
    SelectionOutcome,
    cone_angles,
    filter_and_select,
    update_angle,
)
from .weights import WeightLattice, round_robin_indices

logger = logging.getLogger(__name__)

KINDS = ("accepted", "fallback_best_aligned", "self_transition", "unguided")
_KIND_CODE = {OutcomeKind.ACCEPTED: 0, OutcomeKind.FALLBACK: 1, OutcomeKind.SELF: 2}


@dataclass
class Trajectory:
    """Per-iteration record of one run plus its final state.

    ``kind`` holds indices into ``KINDS``; ``token`` is -1 where no
    candidate was chosen. ``objectives[k]`` is the objective vector of the
    state after iteration ``k`` (``None`` when recording is disabled).
    """

    t: np.ndarray
    position: np.ndarray
    kind: np.ndarray
    token: np.ndarray
    accepted: np.ndarray
    alignment: np.ndarray
    phi: np.ndarray
    rbar: np.ndarray
    objectives: np.ndarray | None
    initial: np.ndarray
    final: np.ndarray
    final_objectives: np.ndarray
    weight: np.ndarray
    seed: int
    run_index: int = 0
    evaluations: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    def kind_names(self) -> list[str]:
        return [KINDS[k] for k in self.kind]

    def accepted_alignments(self) -> np.ndarray:
        """Directional improvement of every transition that actually happened."""
        return self.alignment[self.accepted]


def euler_accept(x: np.ndarray, i: int, token: int, guided: np.ndarray, h: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Move ``x[i]`` to ``token`` with probability ``1 - exp(-h R)``.

    ``R`` is the total off-diagonal guided rate at position ``i``.
    """
    if token == x[i]:
        raise InvalidArgumentError("chosen token must differ from the current one")
    R = -float(guided[x[i]])
    if R < -1e-12 * max(1.0, float(np.abs(guided).max())):
        raise InvariantError(f"negative total outgoing rate {R}")
    if R <= 0.0 or rng.random() > -math.expm1(-h * R):
        return x, False
    out = x.copy()
    out[i] = token
    return out, True


def _base_rate_choice(base_row: np.ndarray, tokens: np.ndarray, mask: np.ndarray, u: float) -> int | None:
    rates = np.where(mask, base_row[tokens], 0.0)
    total = rates.sum()
    if total <= 0:
        return None
    j = int(np.searchsorted(np.cumsum(rates), u * total, side="right"))
    j = min(j, tokens.size - 1)
    while not mask[j]:  # float edge: land on the nearest eligible slot below
        j -= 1
    return j


def _guided_subset(config: RunConfig, fns):
    if config.guided is None:
        return list(range(len(fns)))
    if len(config.guided) != len(fns):
        raise InvalidArgumentError(f"guided mask has {len(config.guided)} entries for {len(fns)} objectives")
    return [n for n, g in enumerate(config.guided) if g]


def mog_dfm_run(config: RunConfig, base, fns: Sequence[ScoreFunction], d: int,
                rng: np.random.Generator, weight: np.ndarray | None = None,
                lattice: WeightLattice | None = None, run_index: int = 0) -> Trajectory:
    """One guided run of ``config.T`` iterations from a uniform random start.

    ``weight`` overrides the trade-off vector otherwise drawn from the
    Das-Dennis lattice over the guided objectives.
    """
    if len(fns) == 0:
        raise InvalidArgumentError("at least one objective is required")
    if d != base.d:
        raise InvalidArgumentError(f"length {d} does not match the base model ({base.d})")
    K = base.K
    T = config.T
    h = 1.0 / T
    sched = base.scheduler
    gidx = _guided_subset(config, fns)
    gfns = [fns[n] for n in gidx]
    importance = config.importance_for(len(fns))[gidx]

    x = rng.integers(K, size=d)
    if weight is None:
        lattice = lattice or WeightLattice(len(gfns), config.num_div)
        weight = lattice.sample(rng)
    weight = np.asarray(weight, dtype=float)
    if weight.size != len(gfns):
        raise InvalidArgumentError("weight vector length does not match the guided objectives")
    positions = rng.integers(d, size=T)

    state = HyperconeState.initial(config)
    N = len(fns)
    rec_t = np.arange(T) * h
    rec_kind = np.zeros(T, dtype=np.int8)
    rec_token = np.full(T, -1, dtype=np.int64)
    rec_acc = np.zeros(T, dtype=bool)
    rec_align = np.zeros(T)
    rec_phi = np.zeros(T)
    rec_rbar = np.zeros(T)
    rec_obj = np.zeros((T, N)) if config.record_objectives else None

    initial = x.copy()
    current = evaluate_all(x, fns)
    evaluations = N + T * (K - 1) * len(gfns)

    try:
        for k in range(T):
            t = rec_t[k]
            i = int(positions[k])
            cur = int(x[i])
            base_row = mixture_velocity(base.posterior(x, t, i), cur, t, sched)
            cands = score_candidates(x, i, gfns, importance, weight, config.lam, K, config.importance_scope)
            guided_row = reweight_velocity(base_row, cands, config.beta)
            angles = cone_angles(cands.scaled, weight)

            if config.disable_filtering:
                eligible = np.ones(len(cands), dtype=bool)
                j = int(np.argmax(cands.combined))
                rejected = int((angles > state.phi).sum())
                outcome = SelectionOutcome(OutcomeKind.ACCEPTED, int(cands.tokens[j]), rejected, len(cands), j)
            else:
                outcome = filter_and_select(cands, weight, state, angles)
                if outcome.kind is OutcomeKind.ACCEPTED:
                    eligible = angles <= state.phi
                elif outcome.kind is OutcomeKind.FALLBACK:
                    eligible = cands.direction > 0
                else:
                    eligible = None

            # all-zero combined scores carry no preference: draw from base rates instead of tie-breaking
            u_select = rng.random()
            if eligible is not None and not np.any(cands.combined):
                j = _base_rate_choice(base_row, cands.tokens, eligible, u_select)
                if j is not None:
                    outcome = SelectionOutcome(outcome.kind, int(cands.tokens[j]), outcome.rejected,
                                               outcome.candidates, j)

            new_state = update_angle(state, outcome)
            if config.disable_adaptation:
                new_state = HyperconeState(state.phi, new_state.rbar, state.alpha_r, state.tau,
                                           state.eta, state.phi_min, state.phi_max)
            rec_phi[k] = state.phi
            state = new_state

            rec_kind[k] = _KIND_CODE[outcome.kind]
            if outcome.kind is not OutcomeKind.SELF:
                rec_token[k] = outcome.token
                rec_align[k] = float(cands.direction[outcome.index])
                x, moved = euler_accept(x, i, outcome.token, guided_row, h, rng)
                if moved:
                    rec_acc[k] = True
                    current = evaluate_all(x, fns)
                    evaluations += N
            rec_rbar[k] = state.rbar
            if rec_obj is not None:
                rec_obj[k] = current
    except Exception as exc:
        partial = Trajectory(rec_t[:k], positions[:k], rec_kind[:k], rec_token[:k], rec_acc[:k],
                             rec_align[:k], rec_phi[:k], rec_rbar[:k],
                             None if rec_obj is None else rec_obj[:k], initial, x, current, weight,
                             config.seed, run_index, evaluations)
        exc.partial_trajectory = partial
        raise

    return Trajectory(rec_t, positions, rec_kind, rec_token, rec_acc, rec_align, rec_phi, rec_rbar,
                      rec_obj, initial, x, current, weight, config.seed, run_index, evaluations)


def unguided_run(config: RunConfig, base, fns: Sequence[ScoreFunction], d: int,
                 rng: np.random.Generator, run_index: int = 0) -> Trajectory:
    """The base chain under the same one-position-per-iteration schedule, no guidance."""
    K = base.K
    T = config.T
    h = 1.0 / T
    x = rng.integers(K, size=d)
    positions = rng.integers(d, size=T)
    N = len(fns)
    initial = x.copy()
    current = evaluate_all(x, fns)
    rec_t = np.arange(T) * h
    rec_token = np.full(T, -1, dtype=np.int64)
    rec_acc = np.zeros(T, dtype=bool)
    rec_obj = np.zeros((T, N)) if config.record_objectives else None
    evaluations = N
    for k in range(T):
        i = int(positions[k])
        cur = int(x[i])
        row = mixture_velocity(base.posterior(x, rec_t[k], i), cur, rec_t[k], base.scheduler)
        off = row.copy()
        off[cur] = 0.0
        R = off.sum()
        if R > 0 and rng.random() <= -math.expm1(-h * R):
            y = int(np.searchsorted(np.cumsum(off), rng.random() * R, side="right"))
            y = min(y, K - 1)
            while off[y] <= 0:
                y -= 1
            x = x.copy()
            x[i] = y
            rec_token[k] = y
            rec_acc[k] = True
            current = evaluate_all(x, fns)
            evaluations += N
        if rec_obj is not None:
            rec_obj[k] = current
    zeros = np.zeros(T)
    return Trajectory(rec_t, positions, np.full(T, 3, dtype=np.int8), rec_token, rec_acc, zeros,
                      zeros.copy(), zeros.copy(), rec_obj, initial, x, current, np.zeros(0),
                      config.seed, run_index, evaluations)


def _run_one(args):
    config, base, fns, d, index, weight, guided = args
    rng = derive_rng(config.seed, index, "run")
    if not guided:
        return unguided_run(config, base, fns, d, rng, run_index=index)
    return mog_dfm_run(config, base, fns, d, rng, weight=weight, run_index=index)


def batch_generate(config: RunConfig, base, fns: Sequence[ScoreFunction], d: int, count: int,
                   assignment: str = "random", jobs: int = 1, guided: bool = True) -> list[Trajectory]:
    """``count`` independent runs, each with its own RNG stream from ``config.seed``.

    ``assignment="random"`` lets each run draw its own weight vector;
    ``"round_robin"`` spreads runs evenly over the lattice.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    if assignment not in ("random", "round_robin"):
        raise InvalidArgumentError(f"unknown assignment policy {assignment!r}")
    weights = [None] * count
    if guided and assignment == "round_robin":
        lattice = WeightLattice(len(_guided_subset(config, fns)), config.num_div)
        weights = [lattice[j] for j in round_robin_indices(count, len(lattice))]
    tasks = [(config, base, fns, d, r, weights[r], guided) for r in range(count)]
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(task) for task in tasks]
