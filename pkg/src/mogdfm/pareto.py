"""Dominance, non-dominated sorting, exhaustive Pareto fronts and hypervolume.

All objectives are maximized: ``a`` dominates ``b`` when ``a >= b``
everywhere and ``a > b`` somewhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import derive_rng
from .errors import CapacityError, InvalidArgumentError

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**7


def dominates(a, b) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(a >= b) and np.any(a > b))


def pareto_mask(points: np.ndarray) -> np.ndarray:
    """Mask of the non-dominated rows, keeping the first of any exact duplicates."""
    P = np.asarray(points, dtype=float)
    n = P.shape[0]
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    # a dominator (or an earlier duplicate) always sorts before the point it
    # dominates under descending lexicographic order with index tiebreak
    order = np.lexsort((np.arange(n),) + tuple(-P[:, m] for m in range(P.shape[1] - 1, -1, -1)))
    front = np.empty_like(P)
    size = 0
    for idx in order:
        p = P[idx]
        if size:
            F = front[:size]
            if np.any(np.all(F >= p, axis=1)):
                continue
        front[size] = p
        size += 1
        keep[idx] = True
    return keep


@dataclass
class ParetoFront:
    sequences: np.ndarray
    objectives: np.ndarray

    def __len__(self):
        return self.objectives.shape[0]


def _evaluate_batch(fn, X: np.ndarray) -> np.ndarray:
    batch = getattr(fn, "evaluate_batch", None)
    if batch is not None:
        return np.asarray(batch(X), dtype=float)
    return np.array([float(fn.evaluate(x)) for x in X])


def enumerate_space(d: int, K: int) -> np.ndarray:
    """Every sequence of length ``d`` over ``K`` tokens, lexicographically."""
    if K**d > ENUMERATION_LIMIT:
        raise CapacityError(f"K**d = {K**d} exceeds the enumeration guard {ENUMERATION_LIMIT}")
    grids = np.indices((K,) * d).reshape(d, -1).T
    return grids.astype(np.int64)


def brute_force_pareto(fns, d: int, K: int) -> ParetoFront:
    """Exact Pareto front of the whole sequence space, in enumeration order."""
    if len(fns) == 0:
        raise InvalidArgumentError("at least one objective is required")
    X = enumerate_space(d, K)
    F = np.column_stack([_evaluate_batch(fn, X) for fn in fns])
    mask = pareto_mask(F)
    return ParetoFront(X[mask], F[mask])


def dominance_matrix(P: np.ndarray) -> np.ndarray:
    """``D[a, b]`` is True when row ``a`` dominates row ``b``."""
    ge = np.all(P[:, None, :] >= P[None, :, :], axis=-1)
    gt = np.any(P[:, None, :] > P[None, :, :], axis=-1)
    return ge & gt


def non_dominated_sort(points) -> list[list[int]]:
    """Partition point indices into successive non-dominated fronts."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2:
        raise InvalidArgumentError("points must be an (n, N) array")
    n = P.shape[0]
    if n == 0:
        return []
    D = dominance_matrix(P)
    dominated_by = D.sum(axis=0)
    fronts = []
    current = np.flatnonzero(dominated_by == 0)
    while current.size:
        fronts.append(current.tolist())
        dominated_by = dominated_by - D[current].sum(axis=0)
        dominated_by[current] = -1
        current = np.flatnonzero(dominated_by == 0)
    return fronts


def crowding_distance(points: np.ndarray) -> np.ndarray:
    """Crowding distance of each row within one front (boundary rows get inf)."""
    P = np.asarray(points, dtype=float)
    n, N = P.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for m in range(N):
        order = np.argsort(P[:, m], kind="stable")
        vals = P[order, m]
        span = vals[-1] - vals[0]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


def _hv2d(P: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(-P[:, 0], kind="stable")
    hv = 0.0
    ybest = ref[1]
    for x, y in P[order]:
        if y > ybest:
            hv += (x - ref[0]) * (y - ybest)
            ybest = y
    return hv


def _hv3d(P: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(-P[:, 2], kind="stable")
    P = P[order]
    hv = 0.0
    for k in range(P.shape[0]):
        z_next = P[k + 1, 2] if k + 1 < P.shape[0] else ref[2]
        height = P[k, 2] - z_next
        if height > 0:
            hv += _hv2d(P[: k + 1, :2], ref[:2]) * height
    return hv


def _valid_points(points, ref) -> tuple[np.ndarray, np.ndarray]:
    P = np.asarray(points, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if P.size == 0:
        return P.reshape(0, ref.size), ref
    if P.ndim != 2 or P.shape[1] != ref.size:
        raise InvalidArgumentError("points and reference point disagree on dimension")
    ok = np.all(P > ref, axis=1)
    if not ok.all():
        logger.warning("%d point(s) do not dominate the reference point; skipped", int((~ok).sum()))
    P = P[ok]
    return P[pareto_mask(P)], ref


def hypervolume_with_error(points, ref, n_samples: int = 100_000,
                           rng: np.random.Generator | None = None,
                           upper=None) -> tuple[float, float]:
    """Dominated volume above ``ref`` and its standard error.

    Exact (error 0) for up to three objectives; Monte Carlo beyond, using a
    fixed default stream so repeated calls agree. ``upper`` fixes the
    sampling box (it must cover every point); with a shared box and stream,
    estimates for nested point sets are themselves monotone.
    """
    P, ref = _valid_points(points, ref)
    if P.shape[0] == 0:
        return 0.0, 0.0
    N = ref.size
    if N == 1:
        return float(P[:, 0].max() - ref[0]), 0.0
    if N == 2:
        return float(_hv2d(P, ref)), 0.0
    if N == 3:
        return float(_hv3d(P, ref)), 0.0
    rng = rng or derive_rng(0, 0, "hypervolume")
    if upper is None:
        upper = P.max(axis=0)
    else:
        upper = np.asarray(upper, dtype=float)
        if upper.shape != ref.shape or np.any(upper < P.max(axis=0)):
            raise InvalidArgumentError("upper corner must cover every point")
    box = float(np.prod(upper - ref))
    hits = 0
    chunk = max(1, 2_000_000 // (P.shape[0] * N))
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        U = ref + rng.random((m, N)) * (upper - ref)
        hits += int(np.all(U[:, None, :] <= P[None, :, :], axis=2).any(axis=1).sum())
    frac = hits / n_samples
    return box * frac, box * float(np.sqrt(frac * (1 - frac) / n_samples))


def hypervolume(points, ref, n_samples: int = 100_000, rng: np.random.Generator | None = None,
                upper=None) -> float:
    return hypervolume_with_error(points, ref, n_samples, rng, upper)[0]
