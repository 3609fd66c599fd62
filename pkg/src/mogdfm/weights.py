"""Das-Dennis simplex lattice of trade-off weight vectors.

The lattice holds every vector ``k / H`` with nonnegative integer ``k`` summing
to ``H``, in lexicographic order of ``k``. Small lattices are materialized;
larger ones are addressed by unranking an index into its composition, so
uniform sampling never needs the full enumeration.
"""

from __future__ import annotations

from collections.abc import Sequence
from functools import lru_cache
from math import comb

import numpy as np

from .errors import CapacityError, InvalidArgumentError

EAGER_LIMIT = 10**6


@lru_cache(maxsize=None)
def composition_count(total: int, parts: int) -> int:
    """Number of ordered ways to write ``total`` as ``parts`` nonnegative integers.

    Computed by the recurrence over the first part rather than by a closed
    form, so it can be checked against the binomial coefficient.
    """
    if parts == 1:
        return 1
    row = [1] * (total + 1)  # counts for one part, totals 0..total
    for _ in range(parts - 1):
        acc = 0
        for r in range(total + 1):
            acc += row[r]
            row[r] = acc
    return row[total]


def _enumerate(parts: int, total: int) -> np.ndarray:
    """All compositions of ``total`` into ``parts`` in lexicographic order."""
    # level[t]: compositions of t into the current number of trailing parts
    level = [np.array([[t]], dtype=np.int64) for t in range(total + 1)]
    for p in range(2, parts + 1):
        top = total if p == parts else None
        nxt = []
        for t in range(total + 1):
            if top is not None and t != top:
                nxt.append(None)
                continue
            blocks = []
            for k in range(t + 1):
                rest = level[t - k]
                head = np.full((rest.shape[0], 1), k, dtype=np.int64)
                blocks.append(np.hstack([head, rest]))
            nxt.append(np.vstack(blocks))
        level = nxt
    return level[total]


class WeightLattice(Sequence):
    """Indexable Das-Dennis lattice for ``N`` objectives and ``H`` subdivisions."""

    def __init__(self, N: int, H: int):
        if N < 1 or H < 1:
            raise InvalidArgumentError(f"need N >= 1 and H >= 1, got N={N}, H={H}")
        self.N = N
        self.H = H
        self.count = composition_count(H, N)
        self._vectors: np.ndarray | None = None

    def __len__(self) -> int:
        if self.count > np.iinfo(np.int64).max:
            raise CapacityError(f"lattice size {self.count} overflows a machine index")
        return self.count

    @property
    def is_materialized(self) -> bool:
        return self._vectors is not None

    def to_array(self) -> np.ndarray:
        """All vectors as an ``(count, N)`` array; refuses above ``EAGER_LIMIT``."""
        if self._vectors is None:
            if self.count > EAGER_LIMIT:
                raise CapacityError(
                    f"lattice N={self.N}, H={self.H} has {self.count} vectors "
                    f"(> {EAGER_LIMIT}); index or sample it instead"
                )
            self._vectors = _enumerate(self.N, self.H) / self.H
        return self._vectors

    def composition(self, index: int) -> tuple[int, ...]:
        """Unrank ``index`` into its integer composition ``(k_1, ..., k_N)``."""
        if not 0 <= index < self.count:
            raise IndexError(index)
        ks = []
        remaining = self.H
        for p in range(self.N - 1):
            tail = self.N - p - 1
            k = 0
            while True:
                block = comb(remaining - k + tail - 1, tail - 1)
                if index < block:
                    break
                index -= block
                k += 1
            ks.append(k)
            remaining -= k
        ks.append(remaining)
        return tuple(ks)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(self.count))]
        if index < 0:
            index += self.count
        if self._vectors is not None:
            return self._vectors[index]
        return np.asarray(self.composition(index), dtype=float) / self.H

    def __iter__(self):
        if self._vectors is not None or self.count <= EAGER_LIMIT:
            yield from self.to_array()
        else:
            for i in range(self.count):
                yield self[i]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self[int(rng.integers(len(self)))]

    def __repr__(self):
        return f"WeightLattice(N={self.N}, H={self.H}, count={self.count})"


def das_dennis(N: int, H: int) -> WeightLattice:
    """Das-Dennis lattice of ``C(H+N-1, N-1)`` weight vectors.

    Lattices with at most ``EAGER_LIMIT`` vectors are materialized up front.
    """
    lattice = WeightLattice(N, H)
    if lattice.count <= EAGER_LIMIT:
        lattice.to_array()
    return lattice


def sample_weight(lattice, rng: np.random.Generator) -> np.ndarray:
    """Draw one weight vector uniformly from ``lattice``."""
    n = len(lattice)
    if n == 0:
        raise InvalidArgumentError("cannot sample from an empty lattice")
    return np.asarray(lattice[int(rng.integers(n))], dtype=float)


def round_robin_indices(count: int, lattice_size: int) -> list[int]:
    """Evenly strided lattice indices for ``count`` runs."""
    return [(r * lattice_size) // count for r in range(count)]
