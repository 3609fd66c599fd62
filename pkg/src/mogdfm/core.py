"""Shared domain types, sequence diagnostics and RNG stream derivation."""

from __future__ import annotations

import math
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import InvalidArgumentError

DEG = math.pi / 180.0


@dataclass(frozen=True)
class Vocabulary:
    """A finite token alphabet of ``size`` symbols, indexed from 0.

    ``labels`` are optional display strings; when every label is a single
    character, sequences serialize as plain strings (``"ACGT"``), otherwise
    as comma-separated integers.
    """

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 2:
            raise InvalidArgumentError(f"vocabulary size must be >= 2, got {self.size}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != self.size:
                raise InvalidArgumentError(
                    f"{len(self.labels)} labels given for vocabulary of size {self.size}"
                )
            if len(set(self.labels)) != self.size:
                raise InvalidArgumentError("vocabulary labels must be unique")

    @classmethod
    def from_labels(cls, labels: str | Sequence[str]) -> "Vocabulary":
        labels = tuple(labels)
        return cls(len(labels), labels)

    @property
    def is_textual(self) -> bool:
        return self.labels is not None and all(len(c) == 1 for c in self.labels)

    def encode(self, text: str) -> np.ndarray:
        """Parse a serialized sequence (label string or comma-separated ints)."""
        text = text.strip()
        if self.is_textual and "," not in text:
            index = {c: k for k, c in enumerate(self.labels)}
            try:
                tokens = [index[c] for c in text]
            except KeyError as exc:
                raise InvalidArgumentError(f"token {exc.args[0]!r} not in vocabulary") from None
        else:
            try:
                tokens = [int(tok) for tok in text.split(",")]
            except ValueError:
                raise InvalidArgumentError(f"cannot parse sequence {text!r}") from None
        return as_sequence(tokens, self.size)

    def decode(self, x: Sequence[int]) -> str:
        if self.is_textual:
            return "".join(self.labels[int(k)] for k in x)
        return ",".join(str(int(k)) for k in x)


def as_sequence(tokens: Iterable[int], K: int | None = None) -> np.ndarray:
    """Validate ``tokens`` and return them as a 1-D int64 array."""
    x = np.asarray(list(tokens) if not isinstance(tokens, np.ndarray) else tokens, dtype=np.int64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgumentError("a sequence must be a non-empty 1-D token list")
    if x.min() < 0 or (K is not None and x.max() >= K):
        raise InvalidArgumentError(f"tokens must lie in [0, {K})")
    return x


@runtime_checkable
class ScoreFunction(Protocol):
    """A deterministic scalar objective over sequences (maximized).

    Implementations may also provide ``deltas(x, i) -> ndarray[K]`` returning
    ``s(x with x[i]=y) - s(x)`` for every token ``y``, and
    ``evaluate_batch(X) -> ndarray[n]``; callers fall back to ``evaluate``.
    """

    name: str

    def evaluate(self, x: np.ndarray) -> float: ...


def evaluate_all(x: np.ndarray, fns: Sequence[ScoreFunction]) -> np.ndarray:
    """Objective vector ``[f.evaluate(x) for f in fns]``."""
    if len(fns) == 0:
        raise InvalidArgumentError("at least one objective is required")
    return np.array([float(f.evaluate(x)) for f in fns])


def hamming_distance(a: Sequence, b: Sequence) -> int:
    if len(a) != len(b):
        raise InvalidArgumentError(f"length mismatch: {len(a)} vs {len(b)}")
    return int(sum(1 for p, q in zip(a, b) if p != q))


def shannon_entropy(s: Sequence) -> float:
    """Entropy in bits of the empirical token distribution within ``s``."""
    n = len(s)
    if n == 0:
        raise InvalidArgumentError("entropy of an empty sequence is undefined")
    counts = Counter(s.tolist() if isinstance(s, np.ndarray) else s)
    h = -sum((c / n) * math.log2(c / n) for c in counts.values())
    return h + 0.0  # normalizes -0.0


def derive_rng(seed: int, run_index: int = 0, purpose: str = "run") -> np.random.Generator:
    """Independent generator for one (run index, purpose) pair of a master seed."""
    tag = zlib.crc32(purpose.encode())
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(run_index), tag))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters of one guided sampling run.

    Angles are radians. Defaults follow the peptide-design settings:
    lambda=beta=eta=1, alpha_r=0.5, tau=0.3, cone 45 deg in [15, 75] deg,
    64 lattice subdivisions and 100 steps.
    """

    T: int = 100
    lam: float = 1.0
    beta: float = 1.0
    alpha_r: float = 0.5
    tau: float = 0.3
    eta: float = 1.0
    phi_init: float = 45 * DEG
    phi_min: float = 15 * DEG
    phi_max: float = 75 * DEG
    num_div: int = 64
    importance: tuple[float, ...] | None = None
    importance_scope: str = "all"
    seed: int = 0
    # ablation switches
    guided: tuple[bool, ...] | None = None
    disable_filtering: bool = False
    disable_adaptation: bool = False
    record_objectives: bool = True

    def __post_init__(self):
        if self.T < 1:
            raise InvalidArgumentError("T must be >= 1")
        if self.lam < 0:
            raise InvalidArgumentError("lambda must be >= 0")
        if self.beta <= 0:
            raise InvalidArgumentError("beta must be > 0")
        if not 0 <= self.alpha_r < 1:
            raise InvalidArgumentError("alpha_r must lie in [0, 1)")
        if not 0 < self.tau < 1:
            raise InvalidArgumentError("tau must lie in (0, 1)")
        if self.eta <= 0:
            raise InvalidArgumentError("eta must be > 0")
        if not 0 < self.phi_min <= self.phi_init <= self.phi_max < math.pi:
            raise InvalidArgumentError("angles must satisfy 0 < phi_min <= phi_init <= phi_max < pi")
        if self.num_div < 1:
            raise InvalidArgumentError("num_div must be >= 1")
        if self.importance is not None:
            object.__setattr__(self, "importance", tuple(float(v) for v in self.importance))
            if not all(v > 0 and math.isfinite(v) for v in self.importance):
                raise InvalidArgumentError("importance weights must be finite and > 0")
        if self.importance_scope not in ("all", "rank_only"):
            raise InvalidArgumentError("importance_scope must be 'all' or 'rank_only'")
        if self.guided is not None:
            object.__setattr__(self, "guided", tuple(bool(g) for g in self.guided))
            if not any(self.guided):
                raise InvalidArgumentError("at least one objective must stay guided")

    def importance_for(self, n_objectives: int) -> np.ndarray:
        if self.importance is None:
            return np.ones(n_objectives)
        if len(self.importance) != n_objectives:
            raise InvalidArgumentError(
                f"importance has {len(self.importance)} entries for {n_objectives} objectives"
            )
        return np.asarray(self.importance, dtype=float)
