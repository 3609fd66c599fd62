"""Synthetic objectives with cheap exact single-token deltas, and benchmark presets."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Vocabulary
from .dfm import PolynomialScheduler, TabularPosterior
from .errors import InvalidArgumentError


class TableObjective:
    """Additive per-position score: ``sum_j table[j, x[j]]``."""

    def __init__(self, table, name: str = "table"):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or not np.all(np.isfinite(table)):
            raise InvalidArgumentError("table must be a finite (d, K) array")
        self.table = table
        self.name = name
        self._rows = np.arange(table.shape[0])

    def evaluate(self, x) -> float:
        return float(self.table[self._rows, x].sum())

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        return self.table[self._rows[None, :], X].sum(axis=1)

    def deltas(self, x, i) -> np.ndarray:
        row = self.table[i]
        return row - row[x[i]]

    def bounds(self) -> tuple[float, float]:
        return float(self.table.min(axis=1).sum()), float(self.table.max(axis=1).sum())

    @classmethod
    def from_csv(cls, path: str | Path, name: str | None = None) -> "TableObjective":
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
        if len({len(r) for r in rows}) != 1:
            raise InvalidArgumentError(f"{path}: rows differ in length")
        return cls(np.array(rows), name or Path(path).stem)


class MotifCountObjective:
    """Number of (possibly overlapping) occurrences of ``motif``."""

    def __init__(self, motif, K: int, name: str = "motif"):
        motif = np.asarray(motif, dtype=np.int64)
        if motif.ndim != 1 or motif.size < 1:
            raise InvalidArgumentError("motif must be a non-empty token list")
        if motif.min() < 0 or motif.max() >= K:
            raise InvalidArgumentError("motif tokens out of vocabulary range")
        self.motif = motif
        self.K = K
        self.name = name

    def evaluate(self, x) -> float:
        x = np.asarray(x)
        if self.motif.size > x.size:
            raise InvalidArgumentError("motif longer than the sequence")
        windows = np.lib.stride_tricks.sliding_window_view(x, self.motif.size)
        return float(np.all(windows == self.motif, axis=1).sum())

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        windows = np.lib.stride_tricks.sliding_window_view(X, self.motif.size, axis=1)
        return np.all(windows == self.motif, axis=2).sum(axis=1).astype(float)

    def deltas(self, x, i) -> np.ndarray:
        # only windows covering position i can change; each needs its other
        # positions to already match and position i to hold the motif token
        m = self.motif.size
        out = np.zeros(self.K)
        for j in range(max(0, i - m + 1), min(i, x.size - m) + 1):
            off = i - j
            window = x[j:j + m]
            if any(window[q] != self.motif[q] for q in range(m) if q != off):
                continue
            tok = int(self.motif[off])
            if x[i] == tok:
                out -= 1.0
            out[tok] += 1.0
        return out


class WindowLookupObjective:
    """Mean of ``lookup[window]`` over all length-``width`` sliding windows.

    Windows are indexed base ``K`` with the first token most significant.
    """

    def __init__(self, width: int, lookup, K: int, name: str = "window"):
        lookup = np.asarray(lookup, dtype=float)
        if not 1 <= width <= 4:
            raise InvalidArgumentError("window width must be in [1, 4]")
        if lookup.shape != (K**width,):
            raise InvalidArgumentError(f"lookup must have K**width = {K**width} entries")
        self.width = width
        self.lookup = lookup
        self.K = K
        self.name = name
        self._place = K ** np.arange(width - 1, -1, -1)

    def _check(self, d):
        if self.width > d:
            raise InvalidArgumentError("window wider than the sequence")

    def evaluate(self, x) -> float:
        x = np.asarray(x)
        self._check(x.size)
        idx = np.lib.stride_tricks.sliding_window_view(x, self.width) @ self._place
        return float(self.lookup[idx].mean())

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        idx = np.lib.stride_tricks.sliding_window_view(X, self.width, axis=1) @ self._place
        return self.lookup[idx].mean(axis=1)

    def deltas(self, x, i) -> np.ndarray:
        d = x.size
        w = self.width
        n_windows = d - w + 1
        starts = np.arange(max(0, i - w + 1), min(i, d - w) + 1)
        if starts.size == 0:
            return np.zeros(self.K)
        idx = np.array([x[j:j + w] @ self._place for j in starts])
        place = self._place[i - starts]
        shifted = idx[:, None] + (np.arange(self.K)[None, :] - x[i]) * place[:, None]
        change = (self.lookup[shifted] - self.lookup[idx][:, None]).sum(axis=0)
        return change / n_windows


# ---------------------------------------------------------------------------
# Benchmark presets
# ---------------------------------------------------------------------------


@dataclass
class Preset:
    """A named benchmark: objectives, base distribution and metric settings."""

    name: str
    vocabulary: Vocabulary
    d: int
    objectives: list
    base: TabularPosterior
    importance: tuple[float, ...]
    reference_point: np.ndarray


def _shifted_table(rng, d, K, raw=None):
    t = rng.random((d, K)) if raw is None else raw
    return t - t.min(axis=1, keepdims=True)


def _profile_dataset(rng, d, K, M, concentration, vocabulary):
    profile = rng.dirichlet(np.full(K, concentration), size=d)
    seqs = np.array([[rng.choice(K, p=profile[j]) for j in range(d)] for _ in range(M)])
    seqs, counts = np.unique(seqs, axis=0, return_counts=True)
    return TabularPosterior(seqs, counts / counts.sum(), vocabulary, PolynomialScheduler(2.0))


def max_observed_improvement(fns, d, K, rng, samples: int = 512) -> np.ndarray:
    """Largest single-token gain of each objective over random sequences and positions."""
    best = np.zeros(len(fns))
    X = rng.integers(K, size=(samples, d))
    P = rng.integers(d, size=samples)
    for x, i in zip(X, P):
        for n, fn in enumerate(fns):
            best[n] = max(best[n], float(np.max(fn.deltas(x, int(i)))))
    return best


def _importance_from_improvements(fns, d, K, rng):
    """Weights inversely proportional to each objective's largest observed gain, max 1."""
    gain = max_observed_improvement(fns, d, K, rng)
    if np.any(gain <= 0):
        raise InvalidArgumentError("an objective never improved in the probe; cannot scale it")
    inv = 1.0 / gain
    return tuple(float(v) for v in inv / inv.max())


def _conflict2() -> Preset:
    rng = np.random.default_rng(20240521)
    d, K = 8, 4
    vocab = Vocabulary.from_labels("ACGT")
    a = rng.random((d, K))
    # anti-correlated but not collinear, so random sequences sit well inside the front
    b = -0.6 * a + rng.random((d, K))
    fa = TableObjective(_shifted_table(rng, d, K, a), "table_a")
    fb = TableObjective(_shifted_table(rng, d, K, b), "table_b")
    fns = [fa, fb]
    ranges = [f.bounds()[1] - f.bounds()[0] for f in fns]
    base = _profile_dataset(rng, d, K, 64, 1.0, vocab)
    ref = np.array([f.bounds()[0] for f in fns]) - 0.01 * np.array(ranges)
    return Preset("conflict2", vocab, d, fns, base, _importance_from_improvements(fns, d, K, rng), ref)


def _tri() -> Preset:
    rng = np.random.default_rng(20240522)
    d, K = 12, 4
    vocab = Vocabulary.from_labels("ACGT")
    table = TableObjective(_shifted_table(rng, d, K, rng.random((d, K)) ** 12), "table")
    motif = MotifCountObjective([0, 1, 2], K, "motif_ACG")
    window = WindowLookupObjective(3, rng.random(K**3) ** 4, K, "window3")
    fns = [table, motif, window]
    lo_t, hi_t = table.bounds()
    bounds = [(lo_t, hi_t), (0.0, float(d // 3)), (float(window.lookup.min()), float(window.lookup.max()))]
    ranges = [hi - lo for lo, hi in bounds]
    base = _profile_dataset(rng, d, K, 128, 0.3, vocab)
    ref = np.array([lo for lo, _ in bounds]) - 0.01 * np.array(ranges)
    return Preset("tri", vocab, d, fns, base, _importance_from_improvements(fns, d, K, rng), ref)


AMINO = "ACDEFGHIKLMNPQRSTVWY"


def _penta() -> Preset:
    rng = np.random.default_rng(20240523)
    d, K = 12, 20
    vocab = Vocabulary.from_labels(AMINO)
    a = rng.random((d, K))
    fa = TableObjective(_shifted_table(rng, d, K, a), "table_a")
    fb = TableObjective(_shifted_table(rng, d, K, -0.3 * a + rng.random((d, K))), "table_b")
    fc = TableObjective(_shifted_table(rng, d, K, 2.0 * rng.random((d, K))), "table_c")
    motif = MotifCountObjective([vocab.labels.index("K")], K, "count_K")
    window = WindowLookupObjective(2, rng.random(K**2) ** 2, K, "window2")
    fns = [fa, fb, motif, window, fc]
    bounds = [fa.bounds(), fb.bounds(), (0.0, float(d)),
              (float(window.lookup.min()), float(window.lookup.max())), fc.bounds()]
    ranges = [hi - lo for lo, hi in bounds]
    base = _profile_dataset(rng, d, K, 256, 2.0, vocab)
    ref = np.array([lo for lo, _ in bounds]) - 0.01 * np.array(ranges)
    return Preset("penta", vocab, d, fns, base, _importance_from_improvements(fns, d, K, rng), ref)


PRESETS = {"conflict2": _conflict2, "tri": _tri, "penta": _penta}


def load_preset(name: str) -> Preset:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory()
