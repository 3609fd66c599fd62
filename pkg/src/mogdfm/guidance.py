"""Rank-directional scoring of single-token candidate transitions.

For a chosen position, every replacement token is scored by how its
objective changes rank among the alternatives (per objective) and by how well
the change vector aligns with the run's trade-off weight vector. The combined
score exponentially reweights the base velocity row.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import ScoreFunction
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

ZSCORE_STD_FLOOR = 1e-12
EXP_CLAMP = 30.0


@dataclass(frozen=True)
class CandidateSet:
    """All single-token moves at one position, with their scores.

    Arrays are aligned on the candidate axis (length ``C = K - 1``); the
    per-objective arrays are ``(C, N)``.
    """

    position: int
    current: int
    tokens: np.ndarray
    delta: np.ndarray
    scaled: np.ndarray
    rank: np.ndarray | None = None
    direction: np.ndarray | None = None
    combined: np.ndarray | None = None

    def __len__(self):
        return self.tokens.size


def objective_deltas(fn: ScoreFunction, x: np.ndarray, i: int, K: int) -> np.ndarray:
    """``s(x with x[i]=y) - s(x)`` for every token ``y`` (zero at ``x[i]``)."""
    fast = getattr(fn, "deltas", None)
    if fast is not None:
        return fast(x, i)
    base = float(fn.evaluate(x))
    out = np.zeros(K)
    y = x.copy()
    for tok in range(K):
        if tok == x[i]:
            continue
        y[i] = tok
        out[tok] = float(fn.evaluate(y)) - base
    return out


def improvement_vectors(x: np.ndarray, i: int, fns: Sequence[ScoreFunction], importance, K: int,
                        importance_scope: str = "all") -> CandidateSet:
    """Objective change vectors for every candidate token at position ``i``.

    ``scaled`` carries the importance-weighted changes used by the directional
    score and the cone test; with ``importance_scope="rank_only"`` it equals
    the raw changes.
    """
    importance = np.asarray(importance, dtype=float)
    if importance.size != len(fns):
        raise InvalidArgumentError(f"{importance.size} importance weights for {len(fns)} objectives")
    cur = int(x[i])
    cols = []
    for fn in fns:
        try:
            cols.append(objective_deltas(fn, x, i, K))
        except Exception as exc:
            raise RuntimeError(f"objective {getattr(fn, 'name', fn)!r} failed at position {i}") from exc
    tokens = _other_tokens(K, cur)
    delta = np.empty((tokens.size, len(cols)))
    for n, col in enumerate(cols):
        delta[:, n] = col[tokens]
    scaled = delta * importance if importance_scope == "all" else delta
    return CandidateSet(i, cur, tokens, delta, scaled)


@functools.lru_cache(maxsize=None)
def _other_tokens(K: int, cur: int) -> np.ndarray:
    out = np.delete(np.arange(K), cur)
    out.setflags(write=False)
    return out


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ascending ranks along axis 0, ties sharing their mean rank."""
    less = (values[None, :, ...] < values[:, None, ...]).sum(axis=1)
    equal = (values[None, :, ...] == values[:, None, ...]).sum(axis=1)
    return less + (equal + 1) / 2.0


def rank_scores(cands: CandidateSet) -> CandidateSet:
    """Per-objective rank of each candidate's change, divided by the candidate count."""
    C = len(cands)
    if C == 0:
        raise InvalidArgumentError("rank_scores needs at least one candidate")
    return replace(cands, rank=average_ranks(cands.delta) / C)


def directional_scores(cands: CandidateSet, weight: np.ndarray) -> CandidateSet:
    weight = np.asarray(weight, dtype=float)
    if weight.size != cands.scaled.shape[1]:
        raise InvalidArgumentError("weight vector length does not match objective count")
    return replace(cands, direction=cands.scaled @ weight)


def zscore(v: np.ndarray) -> np.ndarray:
    """Standardize over the candidate set; a (near-)constant vector maps to zeros."""
    dv = v - v.sum() / v.size
    sd = math.sqrt(float(dv @ dv) / v.size)
    if sd < ZSCORE_STD_FLOOR:
        return np.zeros_like(v)
    return dv / sd


def combine_scores(cands: CandidateSet, lam: float, importance) -> CandidateSet:
    """``zscore(mean_n(i_n * rank_n)) + lam * zscore(direction)``."""
    if cands.rank is None or cands.direction is None:
        raise InvalidArgumentError("rank and directional scores must be filled first")
    importance = np.asarray(importance, dtype=float)
    A = (cands.rank * importance).mean(axis=1)
    return replace(cands, combined=zscore(A) + lam * zscore(cands.direction))


def score_candidates(x, i, fns, importance, weight, lam, K, importance_scope="all") -> CandidateSet:
    """Improvement vectors plus rank, directional and combined scores in one pass."""
    importance = np.asarray(importance, dtype=float)
    weight = np.asarray(weight, dtype=float)
    cands = improvement_vectors(x, i, fns, importance, K, importance_scope)
    if weight.size != cands.scaled.shape[1]:
        raise InvalidArgumentError("weight vector length does not match objective count")
    rank = average_ranks(cands.delta) / len(cands)
    direction = cands.scaled @ weight
    combined = zscore(rank @ (importance / importance.size)) + lam * zscore(direction)
    return CandidateSet(cands.position, cands.current, cands.tokens, cands.delta, cands.scaled,
                        rank, direction, combined)


def reweight_velocity(base: np.ndarray, cands: CandidateSet, beta: float) -> np.ndarray:
    """Guided row: off-diagonal rates scaled by ``beta * exp(combined)``.

    Combined scores are clamped to +-30 before exponentiation.
    """
    if beta <= 0:
        raise InvalidArgumentError("beta must be > 0")
    S = cands.combined
    if S.size and (S.max() > EXP_CLAMP or S.min() < -EXP_CLAMP):
        logger.warning("combined scores clamped to +-%g before exponentiation", EXP_CLAMP)
        S = np.clip(S, -EXP_CLAMP, EXP_CLAMP)
    guided = np.zeros_like(base, dtype=float)
    guided[cands.tokens] = beta * base[cands.tokens] * np.exp(S)
    guided[cands.current] = -guided[cands.tokens].sum()
    return guided
