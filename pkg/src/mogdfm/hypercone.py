"""Adaptive hypercone filter around the trade-off direction.

Candidates whose (importance-scaled) change vector lies within angle ``phi``
of the weight vector are admissible; the best of them by combined score is
selected. The cone widens when the smoothed rejection rate exceeds its target
and narrows when it falls below.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidArgumentError
from .guidance import CandidateSet

logger = logging.getLogger(__name__)


class OutcomeKind(str, Enum):
    ACCEPTED = "accepted"
    FALLBACK = "fallback_best_aligned"
    SELF = "self_transition"


@dataclass(frozen=True)
class SelectionOutcome:
    kind: OutcomeKind
    token: int | None
    rejected: int
    candidates: int
    index: int | None = None  # position of the chosen token within the candidate set


@dataclass(frozen=True)
class HyperconeState:
    phi: float
    rbar: float
    alpha_r: float
    tau: float
    eta: float
    phi_min: float
    phi_max: float

    @classmethod
    def initial(cls, config) -> "HyperconeState":
        """Cone at ``phi_init`` with the rejection EMA started at its target."""
        return cls(config.phi_init, config.tau, config.alpha_r, config.tau, config.eta,
                   config.phi_min, config.phi_max)


def cone_angles(scaled: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Angle between each row of ``scaled`` and ``weight``; zero rows get ``pi``."""
    weight = np.asarray(weight, dtype=float)
    wn = math.sqrt(float(weight @ weight))
    if wn == 0:
        raise InvalidArgumentError("weight vector must be non-zero")
    # divide each row by its largest magnitude so tiny vectors do not underflow
    peak = np.abs(scaled).max(axis=-1, initial=0.0)
    nonzero = peak > 0
    scaled = scaled / np.where(nonzero, peak, 1.0)[..., None]
    norms = np.sqrt(np.einsum("...n,...n->...", scaled, scaled))
    cos = (scaled @ weight) / (np.where(nonzero, norms, 1.0) * wn)
    angles = np.arccos(np.minimum(np.maximum(cos, -1.0), 1.0))
    return np.where(nonzero, angles, math.pi)


def cone_angle(scaled, weight) -> float:
    return float(cone_angles(np.asarray(scaled, dtype=float)[None, :], weight)[0])


def _argmax_lowest(scores: np.ndarray, mask: np.ndarray) -> int:
    masked = np.where(mask, scores, -np.inf)
    return int(np.argmax(masked))  # argmax returns the first (lowest-token) maximum


def filter_and_select(cands: CandidateSet, weight, state: HyperconeState,
                      angles: np.ndarray | None = None) -> SelectionOutcome:
    """Pick the best in-cone candidate, else the best positively aligned one.

    When no candidate has a positive dot product with ``weight`` the outcome
    is a self-transition. Ties go to the lowest token index.
    """
    C = len(cands)
    if C == 0:
        raise InvalidArgumentError("filter_and_select needs at least one candidate")
    if angles is None:
        angles = cone_angles(cands.scaled, weight)
    inside = angles <= state.phi
    rejected = int(C - inside.sum())
    if inside.any():
        j = _argmax_lowest(cands.combined, inside)
        return SelectionOutcome(OutcomeKind.ACCEPTED, int(cands.tokens[j]), rejected, C, j)
    dots = cands.direction if cands.direction is not None else cands.scaled @ np.asarray(weight, dtype=float)
    aligned = dots > 0
    if aligned.any():
        j = _argmax_lowest(cands.combined, aligned)
        return SelectionOutcome(OutcomeKind.FALLBACK, int(cands.tokens[j]), rejected, C, j)
    return SelectionOutcome(OutcomeKind.SELF, None, rejected, C, None)


def update_angle(state: HyperconeState, outcome: SelectionOutcome) -> HyperconeState:
    """Fold this step's rejection rate into the EMA and rescale the cone."""
    if outcome.candidates == 0:
        logger.warning("no candidates this step; hypercone state unchanged")
        return state
    r = outcome.rejected / outcome.candidates
    rbar = state.alpha_r * state.rbar + (1.0 - state.alpha_r) * r
    phi = state.phi * math.exp(state.eta * (rbar - state.tau))
    phi = min(max(phi, state.phi_min), state.phi_max)
    return HyperconeState(phi, rbar, state.alpha_r, state.tau, state.eta, state.phi_min, state.phi_max)
