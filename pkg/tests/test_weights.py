import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mogdfm.errors import CapacityError, InvalidArgumentError
from mogdfm.weights import (
    EAGER_LIMIT,
    WeightLattice,
    composition_count,
    das_dennis,
    round_robin_indices,
    sample_weight,
)


def _compositions(N, H):
    """Reference enumeration by filtering the full grid."""
    return [k for k in itertools.product(range(H + 1), repeat=N) if sum(k) == H]


def test_n2_h2():
    L = das_dennis(2, 2)
    assert L.to_array().tolist() == [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]


def test_n3_h2():
    V = das_dennis(3, 2).to_array().tolist()
    assert len(V) == 6
    assert [1.0, 0.0, 0.0] in V and [0.5, 0.5, 0.0] in V


def test_n5_h64_count():
    L = das_dennis(5, 64)
    assert len(L) == math.comb(68, 4) == 814385


@given(st.integers(1, 6), st.integers(1, 64))
def test_count_matches_binomial(N, H):
    assert composition_count(H, N) == math.comb(H + N - 1, N - 1)


@given(st.integers(1, 4), st.integers(1, 7))
def test_enumeration_matches_filtered_grid(N, H):
    L = das_dennis(N, H)
    ref = np.array(_compositions(N, H), dtype=float) / H  # product order is lexicographic
    assert np.array_equal(L.to_array(), ref)


@given(st.integers(1, 6), st.integers(1, 64), st.data())
def test_vectors_on_grid_and_sum_to_one(N, H, data):
    L = WeightLattice(N, H)
    idx = data.draw(st.integers(0, len(L) - 1))
    w = L[idx]
    assert abs(w.sum() - 1.0) <= 1e-12
    k = w * H
    assert np.allclose(k, np.round(k), atol=1e-9) and np.all(w >= 0)


@given(st.integers(2, 4), st.integers(1, 8))
def test_lazy_unranking_matches_eager(N, H):
    eager = das_dennis(N, H).to_array()
    lazy = WeightLattice(N, H)
    assert np.array_equal(np.array([lazy.composition(j) for j in range(len(lazy))]) / H, eager)


def test_large_lattice_is_lazy():
    L = das_dennis(6, 200)
    assert len(L) > EAGER_LIMIT and not L.is_materialized
    with pytest.raises(CapacityError):
        L.to_array()
    assert L[0].tolist() == [0, 0, 0, 0, 0, 1.0]
    assert L[len(L) - 1].tolist() == [1.0, 0, 0, 0, 0, 0]


def test_overflowing_count_is_a_capacity_error():
    L = WeightLattice(40, 10**6)
    with pytest.raises(CapacityError):
        len(L)


def test_invalid_arguments():
    with pytest.raises(InvalidArgumentError):
        das_dennis(0, 3)
    with pytest.raises(InvalidArgumentError):
        das_dennis(2, 0)
    with pytest.raises(InvalidArgumentError):
        sample_weight([], np.random.default_rng(0))


def test_sampling_singleton_and_determinism():
    assert sample_weight(das_dennis(1, 5), np.random.default_rng(0)).tolist() == [1.0]
    L = das_dennis(2, 2)
    a = sample_weight(L, np.random.default_rng(9))
    b = sample_weight(L, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_sampling_is_uniform():
    L = das_dennis(2, 2)
    rng = np.random.default_rng(3)
    n = 100_000
    draws = np.array([sample_weight(L, rng)[0] for _ in range(n)])
    sigma = math.sqrt(n * (1 / 3) * (2 / 3))
    for v in (0.0, 0.5, 1.0):
        assert abs((draws == v).sum() - n / 3) <= 3 * sigma


def test_round_robin_spreads_over_lattice():
    assert round_robin_indices(3, 3) == [0, 1, 2]
    idx = round_robin_indices(4, 10)
    assert idx == [0, 2, 5, 7]
    assert all(0 <= j < 10 for j in round_robin_indices(25, 10))
