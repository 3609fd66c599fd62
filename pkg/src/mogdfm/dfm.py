"""Discrete flow matching on the mixture path with a uniform source.

A base generator here is anything that returns per-coordinate posteriors
``p(x1[i] | x_t)``; the velocity of coordinate ``i`` then follows from the
scheduler as ``kappa_dot / (1 - kappa) * (posterior - onehot(x_t[i]))``.
``TabularPosterior`` computes those posteriors exactly for an explicit
target distribution over a small sequence space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .core import Vocabulary, as_sequence
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

ONE_MINUS_KAPPA_FLOOR = 1e-9


@dataclass(frozen=True)
class PolynomialScheduler:
    """Convex polynomial schedule ``kappa(t) = t**exponent``."""

    exponent: float = 2.0

    def __post_init__(self):
        if not self.exponent > 0:
            raise InvalidArgumentError("scheduler exponent must be > 0")

    @staticmethod
    def _check(t: float):
        if not 0.0 <= t <= 1.0:
            raise InvalidArgumentError(f"time must lie in [0, 1], got {t}")

    def kappa(self, t: float) -> float:
        self._check(t)
        return t**self.exponent

    def kappa_dot(self, t: float) -> float:
        self._check(t)
        if t == 0.0:
            return self.exponent if self.exponent == 1 else (0.0 if self.exponent > 1 else math.inf)
        return self.exponent * t ** (self.exponent - 1)

    def coefficient(self, t: float) -> float:
        """``kappa_dot / (1 - kappa)`` with ``1 - kappa`` floored at 1e-9."""
        return self.kappa_dot(t) / max(1.0 - self.kappa(t), ONE_MINUS_KAPPA_FLOOR)


class PosteriorModel(Protocol):
    K: int
    d: int

    def posterior(self, x: np.ndarray, t: float, i: int) -> np.ndarray: ...


class UniformPosterior:
    """Posterior that ignores the state: uniform over all ``K`` tokens."""

    def __init__(self, K: int, d: int, scheduler: PolynomialScheduler | None = None):
        self.K = K
        self.d = d
        self.scheduler = scheduler or PolynomialScheduler()

    def posterior(self, x, t, i):
        return np.full(self.K, 1.0 / self.K)

    def posterior_batch(self, X, t):
        return np.full((X.shape[0], self.d, self.K), 1.0 / self.K)


class TabularPosterior:
    """Exact posteriors for an explicit target distribution ``p1``.

    With a uniform source, each observed coordinate contributes a factor
    ``(1 - kappa)/K + kappa * [x_t[j] == x1[j]]`` to the likelihood of ``x1``,
    so the posterior over support points depends only on how many
    coordinates match.

    Args:
        sequences: ``(M, d)`` support of the target distribution.
        masses: probability of each support point (renormalized if needed).
        vocabulary: token alphabet, or its size.
        scheduler: mixture-path schedule.
    """

    def __init__(self, sequences, masses, vocabulary, scheduler=None):
        self.vocabulary = vocabulary if isinstance(vocabulary, Vocabulary) else Vocabulary(int(vocabulary))
        self.K = self.vocabulary.size
        S = np.asarray(sequences, dtype=np.int64)
        if S.ndim != 2 or S.shape[0] == 0:
            raise InvalidArgumentError("dataset must be a non-empty (M, d) array")
        if S.min() < 0 or S.max() >= self.K:
            raise InvalidArgumentError("dataset tokens out of vocabulary range")
        p = np.asarray(masses, dtype=float)
        if p.shape != (S.shape[0],) or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidArgumentError("masses must be finite, nonnegative, one per sequence")
        total = p.sum()
        if total <= 0:
            raise InvalidArgumentError("masses sum to zero")
        if abs(total - 1.0) > 1e-6:
            logger.warning("dataset masses sum to %.8g; renormalizing", total)
        self.sequences = S
        self.masses = p / total
        self.d = S.shape[1]
        self.scheduler = scheduler or PolynomialScheduler()
        with np.errstate(divide="ignore"):
            self._log_masses = np.log(self.masses)
        self._onehot = np.eye(self.K)[S]  # (M, d, K)

    def _support_weights(self, matches: np.ndarray, t: float) -> np.ndarray:
        """Normalized posterior over support points given match counts."""
        kappa = self.scheduler.kappa(t)
        a = (1.0 - kappa) / self.K
        if a <= 0.0:
            w = np.where(matches == self.d, self.masses, 0.0)
            total = w.sum(axis=-1, keepdims=True)
            if np.any(total == 0):
                logger.warning("t=1 state outside dataset support; using uniform posterior")
                return None
            return w / total
        logw = self._log_masses + matches * math.log(a + kappa) + (self.d - matches) * math.log(a)
        logw = logw - logw.max(axis=-1, keepdims=True)
        w = np.exp(logw)
        return w / w.sum(axis=-1, keepdims=True)

    def posterior(self, x: np.ndarray, t: float, i: int) -> np.ndarray:
        """``p(x1[i] = . | x_t = x)`` as a length-``K`` vector."""
        matches = (self.sequences == x).sum(axis=1)
        w = self._support_weights(matches, t)
        if w is None:
            return np.full(self.K, 1.0 / self.K)
        return np.bincount(self.sequences[:, i], weights=w, minlength=self.K)

    def posterior_batch(self, X: np.ndarray, t: float) -> np.ndarray:
        """Posteriors for every state in ``X`` and every coordinate: ``(n, d, K)``."""
        matches = (X[:, None, :] == self.sequences[None, :, :]).sum(axis=-1)
        w = self._support_weights(matches, t)
        if w is None:
            w = np.where(matches == self.d, self.masses, 0.0)
            out = np.full((X.shape[0], self.d, self.K), 1.0 / self.K)
            ok = w.sum(axis=1) > 0
            out[ok] = np.einsum("nm,mdk->ndk", w[ok] / w[ok].sum(axis=1, keepdims=True), self._onehot)
            return out
        return np.einsum("nm,mdk->ndk", w, self._onehot)

    def sample_target(self, X: np.ndarray, t: float, rng: np.random.Generator) -> np.ndarray:
        """Draw ``x1 ~ p(x1 | x_t)`` jointly for each row of ``X``."""
        matches = (X[:, None, :] == self.sequences[None, :, :]).sum(axis=-1)
        w = self._support_weights(matches, t)
        if w is None:
            w = np.tile(self.masses, (X.shape[0], 1))
        cdf = np.cumsum(w, axis=1)
        u = rng.random((X.shape[0], 1)) * cdf[:, -1:]
        j = np.minimum((u >= cdf).sum(axis=1), self.sequences.shape[0] - 1)
        return self.sequences[j].copy()

    def marginal(self, i: int) -> np.ndarray:
        return np.bincount(self.sequences[:, i], weights=self.masses, minlength=self.K)


def exact_posterior(model: TabularPosterior, x, t: float, i: int) -> np.ndarray:
    x = as_sequence(x, model.K)
    if x.size != model.d:
        raise InvalidArgumentError(f"sequence length {x.size} != model length {model.d}")
    if not 0 <= i < model.d:
        raise InvalidArgumentError(f"coordinate {i} out of range")
    return model.posterior(x, t, i)


def mixture_velocity(posterior: np.ndarray, x_i: int, t: float, scheduler: PolynomialScheduler) -> np.ndarray:
    """Velocity row ``u(y)`` for one coordinate currently holding token ``x_i``."""
    c = scheduler.coefficient(t)
    u = c * np.asarray(posterior, dtype=float)
    # the diagonal is set from the off-diagonal sum so the row sums to exactly zero
    u[x_i] = 0.0
    u[x_i] = -u.sum()
    return u


def rate_condition_violation(row: np.ndarray, x_i: int) -> float:
    """Largest violation of nonnegative off-diagonals and zero row sum."""
    off = np.delete(row, x_i)
    neg = float(max(0.0, -off.min())) if off.size else 0.0
    scale = max(1.0, float(np.abs(row).max()))
    return max(neg, abs(float(row.sum())) / scale)


def generalized_kl(u, v) -> float:
    """Bregman divergence ``sum(u log(u/v) - u + v)`` between nonnegative vectors.

    Returns ``inf`` (with a logged warning) where ``u > 0`` meets ``v = 0``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise InvalidArgumentError("generalized_kl needs vectors of equal length")
    if np.any(u < 0) or np.any(v < 0):
        raise InvalidArgumentError("generalized_kl is defined for nonnegative vectors")
    if np.any((u > 0) & (v == 0)):
        logger.warning("generalized KL is infinite: u > 0 where v = 0")
        return math.inf
    pos = u > 0
    # log difference rather than log ratio: u / v can underflow for tiny u
    return float(np.sum(u[pos] * (np.log(u[pos]) - np.log(v[pos]))) - u.sum() + v.sum())


def conditional_loss(model, x_t: np.ndarray, x1: np.ndarray, t: float, scheduler: PolynomialScheduler) -> float:
    """Per-sample loss: the generalized KL between conditional and model rates, summed over coordinates."""
    c = scheduler.coefficient(t)
    if c == 0.0:
        return 0.0
    total = 0.0
    for i in range(x_t.size):
        p = model.posterior(x_t, t, i)
        same = x_t[i] == x1[i]
        if same:
            total += c * (1.0 - p[x_t[i]])
        else:
            p1 = p[x1[i]]
            if p1 <= 0:
                return math.inf
            total += c * (-math.log(p1) - p[x_t[i]])
    return total


def elbo_loss(model, dataset: TabularPosterior, scheduler: PolynomialScheduler, mc_samples: int,
              rng: np.random.Generator) -> float:
    """Monte Carlo estimate of the generalized-KL bound on ``-log p1(x1)``.

    Times are stratified (one draw per cell of a uniform grid) once
    ``mc_samples >= 32``; smaller budgets draw i.i.d. uniform times.
    """
    if mc_samples < 1:
        raise InvalidArgumentError("mc_samples must be >= 1")
    K, d = dataset.K, dataset.d
    if mc_samples >= 32:
        ts = (np.arange(mc_samples) + rng.random(mc_samples)) / mc_samples
    else:
        ts = rng.random(mc_samples)
    idx = rng.choice(dataset.sequences.shape[0], size=mc_samples, p=dataset.masses)
    x0s = rng.integers(K, size=(mc_samples, d))
    keep = rng.random((mc_samples, d))
    total = 0.0
    for s in range(mc_samples):
        t = float(ts[s])
        x1 = dataset.sequences[idx[s]]
        x_t = np.where(keep[s] < scheduler.kappa(t), x1, x0s[s])
        total += conditional_loss(model, x_t, x1, t, scheduler)
    return total / mc_samples


def unguided_euler_step(x: np.ndarray, i: int, velocity: np.ndarray, h: float,
                        rng: np.random.Generator) -> np.ndarray:
    """One exponential-Euler step of coordinate ``i`` under ``velocity``.

    Stays with probability ``exp(-h R)`` where ``R`` is the total off-diagonal
    rate; otherwise jumps to ``y`` with probability proportional to ``u(y)``.
    """
    if h <= 0:
        raise InvalidArgumentError("step size must be > 0")
    off = np.array(velocity, dtype=float)
    off[x[i]] = 0.0
    R = off.sum()
    if R <= 0 or rng.random() < math.exp(-h * R):
        return x.copy()
    y = int(np.searchsorted(np.cumsum(off), rng.random() * R, side="right"))
    y = min(y, off.size - 1)
    out = x.copy()
    out[i] = y
    return out


def sample_unguided(model, n: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` sequences by running the factorized chain from t=0 to 1.

    Every coordinate takes an exponential-Euler step per time step, using the
    posterior at the step's left endpoint. The final interval ends at
    ``kappa = 1`` where the integrated rate is unbounded; it is integrated
    exactly by drawing ``x1`` from the joint posterior given the current
    state (per-coordinate posterior draws for models without one).
    """
    K, d = model.K, model.d
    h = 1.0 / T
    sched = model.scheduler
    X = rng.integers(K, size=(n, d))
    rows = np.arange(n)[:, None]
    cols = np.arange(d)[None, :]
    for k in range(T - 1):
        t = k * h
        P = model.posterior_batch(X, t)
        c = sched.coefficient(t)
        off = c * P
        off[rows, cols, X] = 0.0
        R = off.sum(axis=-1)
        jump = rng.random((n, d)) >= np.exp(-h * R)
        cdf = np.cumsum(off, axis=-1)
        u = rng.random((n, d, 1)) * R[..., None]
        Y = np.minimum((u >= cdf).sum(axis=-1), K - 1)
        X = np.where(jump & (R > 0), Y, X)
    t = (T - 1) * h
    if hasattr(model, "sample_target"):
        return model.sample_target(X, t, rng)
    P = model.posterior_batch(X, t)
    cdf = np.cumsum(P, axis=-1)
    u = rng.random((n, d, 1)) * cdf[..., -1:]
    return np.minimum((u >= cdf).sum(axis=-1), K - 1)


def load_dataset(path: str | Path, vocabulary: Vocabulary, scheduler=None) -> TabularPosterior:
    """Read a ``<sequence> <mass>`` text file ('#' starts a comment)."""
    seqs, masses = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidArgumentError(f"{path}:{lineno}: expected '<sequence> <mass>'")
        seqs.append(vocabulary.encode(parts[0]))
        try:
            masses.append(float(parts[1]))
        except ValueError:
            raise InvalidArgumentError(f"{path}:{lineno}: bad mass {parts[1]!r}") from None
    if not seqs:
        raise InvalidArgumentError(f"{path}: no sequences")
    if len({s.size for s in seqs}) != 1:
        raise InvalidArgumentError(f"{path}: sequences differ in length")
    return TabularPosterior(np.vstack(seqs), masses, vocabulary, scheduler)


def dump_dataset(model: TabularPosterior) -> str:
    lines = [f"{model.vocabulary.decode(s)} {float(m)!r}" for s, m in zip(model.sequences, model.masses)]
    return "\n".join(lines) + "\n"
