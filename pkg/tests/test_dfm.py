import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mogdfm.core import Vocabulary
from mogdfm.dfm import (
    PolynomialScheduler,
    TabularPosterior,
    UniformPosterior,
    conditional_loss,
    dump_dataset,
    elbo_loss,
    exact_posterior,
    generalized_kl,
    load_dataset,
    mixture_velocity,
    rate_condition_violation,
    sample_unguided,
    unguided_euler_step,
)
from mogdfm.errors import InvalidArgumentError

from conftest import joint_posterior_oracle

SCHED = PolynomialScheduler()


@st.composite
def tiny_dataset(draw, max_d=6, max_K=4, max_M=8):
    K = draw(st.integers(2, max_K))
    d = draw(st.integers(1, max_d))
    M = draw(st.integers(1, max_M))
    S = np.array(draw(st.lists(st.lists(st.integers(0, K - 1), min_size=d, max_size=d),
                               min_size=M, max_size=M, unique_by=tuple)))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=len(S), max_size=len(S))))
    return K, S, w / w.sum()


# scheduler

def test_kappa_examples():
    assert (SCHED.kappa(0.0), SCHED.kappa_dot(0.0)) == (0.0, 0.0)
    assert (SCHED.kappa(1.0), SCHED.kappa_dot(1.0)) == (1.0, 2.0)
    assert (SCHED.kappa(0.5), SCHED.kappa_dot(0.5)) == (0.25, 1.0)


@pytest.mark.parametrize("t", [-0.1, 1.1, math.nan])
def test_kappa_rejects_bad_time(t):
    with pytest.raises(InvalidArgumentError):
        SCHED.kappa(t)


@given(st.sampled_from([1.0, 2.0, 3.0]), st.floats(0, 1), st.floats(0, 1))
def test_kappa_monotone(p, a, b):
    s = PolynomialScheduler(p)
    assert s.kappa(0) == 0 and s.kappa(1) == 1
    if a < b:
        assert s.kappa(a) <= s.kappa(b)


def test_kappa_dot_matches_finite_difference():
    for p in (1.0, 2.0, 3.0):
        s = PolynomialScheduler(p)
        for t in (0.2, 0.5, 0.8):
            h = 1e-6
            fd = (s.kappa(t + h) - s.kappa(t - h)) / (2 * h)
            assert s.kappa_dot(t) == pytest.approx(fd, rel=1e-6)


# posteriors

def test_posterior_two_hypotheses():
    m = TabularPosterior([[0], [1]], [0.75, 0.25], 2)
    t = math.sqrt(0.5)
    assert exact_posterior(m, [0], t, 0) == pytest.approx([0.9, 0.1], abs=1e-12)


def test_posterior_at_t0_is_marginal():
    m = TabularPosterior([[0, 1], [1, 1], [2, 0]], [0.5, 0.3, 0.2], 3)
    for x in ([0, 0], [2, 1], [1, 0]):
        assert exact_posterior(m, x, 0.0, 0) == pytest.approx([0.5, 0.3, 0.2], abs=1e-15)
        assert exact_posterior(m, x, 0.0, 1) == pytest.approx([0.2, 0.8, 0.0], abs=1e-15)


def test_single_sequence_dataset_is_a_point_mass():
    m = TabularPosterior([[2, 0, 1]], [1.0], 3)
    for t in (0.01, 0.5, 0.99, 1.0):
        for i in range(3):
            p = exact_posterior(m, [1, 1, 1], t, i) if t < 1 else exact_posterior(m, [2, 0, 1], t, i)
            assert p.tolist() == np.eye(3)[[2, 0, 1][i]].tolist()


def test_t1_outside_support_is_uniform(caplog):
    m = TabularPosterior([[0, 0]], [1.0], 3)
    assert exact_posterior(m, [1, 1], 1.0, 0) == pytest.approx([1 / 3] * 3)
    assert "outside dataset support" in caplog.text


def test_posterior_validates_inputs():
    m = TabularPosterior([[0, 0]], [1.0], 2)
    with pytest.raises(InvalidArgumentError):
        exact_posterior(m, [0], 0.5, 0)
    with pytest.raises(InvalidArgumentError):
        exact_posterior(m, [0, 0], 0.5, 2)
    with pytest.raises(InvalidArgumentError):
        exact_posterior(m, [0, 0], 1.5, 0)
    with pytest.raises(InvalidArgumentError):
        TabularPosterior([[0, 2]], [1.0], 2)
    with pytest.raises(InvalidArgumentError):
        TabularPosterior([[0, 1]], [0.0], 2)


@given(tiny_dataset(), st.floats(0.0, 0.999), st.data())
def test_posterior_matches_joint_enumeration(case, t, data):
    K, S, p = case
    d = S.shape[1]
    x = np.array(data.draw(st.lists(st.integers(0, K - 1), min_size=d, max_size=d)))
    i = data.draw(st.integers(0, d - 1))
    m = TabularPosterior(S, p, K)
    got = exact_posterior(m, x, t, i)
    assert abs(got.sum() - 1.0) <= 1e-9 and np.all(got >= 0)
    assert np.allclose(got, joint_posterior_oracle(S, p, K, x, t, i), atol=1e-12, rtol=0)


@given(tiny_dataset(max_d=4), st.floats(0.0, 0.99))
def test_posterior_batch_agrees_with_single(case, t):
    K, S, p = case
    m = TabularPosterior(S, p, K)
    X = np.random.default_rng(0).integers(K, size=(5, S.shape[1]))
    B = m.posterior_batch(X, t)
    for n in range(5):
        for i in range(S.shape[1]):
            assert np.allclose(B[n, i], m.posterior(X[n], t, i), atol=1e-14)


def test_renormalizes_with_warning(caplog):
    m = TabularPosterior([[0], [1]], [2.0, 2.0], 2)
    assert m.masses.tolist() == [0.5, 0.5]
    assert "renormalizing" in caplog.text


# velocities

def test_velocity_examples():
    assert np.all(mixture_velocity(np.array([0.0, 1.0, 0.0]), 1, 0.5, SCHED) == 0)
    assert SCHED.coefficient(0.5) == pytest.approx(4 / 3)
    c = SCHED.coefficient(0.5)
    u = mixture_velocity(np.array([0.9, 0.1]), 1, 0.5, SCHED)
    assert u == pytest.approx([0.9 * c, -0.9 * c])


def test_coefficient_is_clamped_at_one():
    assert SCHED.coefficient(1.0) == pytest.approx(2.0 / 1e-9)
    assert math.isfinite(SCHED.coefficient(1.0))


@given(st.integers(2, 8), st.floats(0.0, 0.999), st.data())
def test_velocity_rate_conditions(K, t, data):
    raw = np.array(data.draw(st.lists(st.floats(0, 1), min_size=K, max_size=K)))
    post = raw / raw.sum() if raw.sum() > 0 else np.full(K, 1 / K)
    xi = data.draw(st.integers(0, K - 1))
    u = mixture_velocity(post, xi, t, SCHED)
    assert np.all(np.delete(u, xi) >= 0)
    assert rate_condition_violation(u, xi) <= 1e-12


def test_rate_condition_violation_detects():
    assert rate_condition_violation(np.array([-1.0, 2.0, -1.0]), 0) == pytest.approx(1.0)
    assert rate_condition_violation(np.array([-1.0, 0.5, 0.5]), 0) == 0.0


# divergence and losses

def test_generalized_kl_examples(caplog):
    assert generalized_kl([1, 2], [1, 2]) == 0.0
    assert generalized_kl([2], [1]) == pytest.approx(2 * math.log(2) - 1)
    assert generalized_kl([0], [3]) == 3.0
    assert generalized_kl([1], [0]) == math.inf
    assert "infinite" in caplog.text
    with pytest.raises(InvalidArgumentError):
        generalized_kl([1, 2], [1])


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0.01, 10)), min_size=1, max_size=6))
def test_generalized_kl_nonnegative(pairs):
    u, v = zip(*pairs)
    assert generalized_kl(u, v) >= -1e-9


@given(tiny_dataset(max_d=3), st.floats(0.01, 0.95), st.data())
def test_conditional_loss_is_generalized_kl_off_diagonal(case, t, data):
    """The per-sample loss is the generalized KL between conditional and model off-diagonal rates."""
    K, S, p = case
    d = S.shape[1]
    m = TabularPosterior(S, p, K)
    x1 = S[data.draw(st.integers(0, len(S) - 1))]
    xt = np.array(data.draw(st.lists(st.integers(0, K - 1), min_size=d, max_size=d)))
    c = SCHED.coefficient(t)
    total = 0.0
    for i in range(d):
        target = c * (np.eye(K)[x1[i]])
        model = c * m.posterior(xt, t, i)
        target[xt[i]] = model[xt[i]] = 0.0
        total += generalized_kl(target, model)
    assert conditional_loss(m, xt, x1, t, SCHED) == pytest.approx(total, rel=1e-9, abs=1e-9)


def test_elbo_exact_beats_uniform_pinned():
    S = np.array([[0, 1, 2], [2, 2, 0], [1, 0, 1]])
    m = TabularPosterior(S, [0.5, 0.3, 0.2], 3)
    exact = elbo_loss(m, m, SCHED, 256, np.random.default_rng(0))
    unif = elbo_loss(UniformPosterior(3, 3), m, SCHED, 256, np.random.default_rng(0))
    assert exact < unif
    assert exact == pytest.approx(1.8404624055858718, rel=1e-12)


@given(tiny_dataset(max_d=4, max_K=3, max_M=5))
def test_elbo_exact_not_worse_than_uniform(case):
    K, S, p = case
    m = TabularPosterior(S, p, K)
    exact = elbo_loss(m, m, SCHED, 64, np.random.default_rng(1))
    unif = elbo_loss(UniformPosterior(K, S.shape[1]), m, SCHED, 64, np.random.default_rng(1))
    assert exact <= unif


def test_elbo_single_sequence_finite():
    m = TabularPosterior([[1, 0, 1, 1]], [1.0], 2)
    v = elbo_loss(m, m, SCHED, 200, np.random.default_rng(2))
    assert math.isfinite(v) and v >= 0


class HalfSchedule:
    """kappa = t/2 never reaches 1, so every loss term is bounded."""

    def kappa(self, t):
        return t / 2

    def coefficient(self, t):
        return 0.5 / (1 - t / 2)


def test_elbo_std_scales_with_samples():
    m = TabularPosterior([[0, 1], [1, 1], [2, 0]], [0.5, 0.3, 0.2], 3)
    model = UniformPosterior(3, 2)
    sched = HalfSchedule()
    rng = np.random.default_rng(4)
    s8 = np.std([elbo_loss(model, m, sched, 8, rng) for _ in range(2000)])
    s16 = np.std([elbo_loss(model, m, sched, 16, rng) for _ in range(2000)])
    s32 = np.std([elbo_loss(model, m, sched, 32, rng) for _ in range(2000)])
    assert s16 / s8 == pytest.approx(1 / math.sqrt(2), rel=0.1)
    # stratified times at 32 do at least as well as i.i.d. ones
    assert s32 <= s16 / math.sqrt(2) * 1.1
    with pytest.raises(InvalidArgumentError):
        elbo_loss(model, m, SCHED, 0, rng)


# euler step and sampler

def test_euler_zero_rates_always_stays():
    rng = np.random.default_rng(0)
    x = np.array([1, 0])
    for _ in range(100):
        assert unguided_euler_step(x, 0, np.zeros(3), 0.5, rng).tolist() == [1, 0]
    with pytest.raises(InvalidArgumentError):
        unguided_euler_step(x, 0, np.zeros(3), 0.0, rng)


def test_euler_stay_probability_half():
    rng = np.random.default_rng(1)
    v = np.array([-math.log(2), math.log(2), 0.0])
    n = 100_000
    stays = sum(unguided_euler_step(np.array([0]), 0, v, 1.0, rng)[0] == 0 for _ in range(n))
    assert abs(stays - n / 2) <= 3 * math.sqrt(n / 4)


def test_euler_jump_ratio_three_to_one():
    rng = np.random.default_rng(2)
    v = np.array([-4.0, 3.0, 1.0])
    n = 100_000
    counts = np.zeros(3, dtype=int)
    for _ in range(n):
        counts[unguided_euler_step(np.array([0]), 0, v, 50.0, rng)[0]] += 1
    assert counts[0] == 0
    jumps = counts[1] + counts[2]
    assert abs(counts[1] - 0.75 * jumps) <= 3 * math.sqrt(jumps * 0.75 * 0.25)


def test_sample_unguided_reproduces_support():
    S = np.array([[0, 1, 2], [2, 2, 0], [1, 0, 1], [0, 0, 0]])
    p = np.array([0.4, 0.3, 0.2, 0.1])
    m = TabularPosterior(S, p, 3)
    n = 20_000
    X = sample_unguided(m, n, 50, np.random.default_rng(5))
    keys = {tuple(s): k for k, s in enumerate(S)}
    idx = np.array([keys.get(tuple(x), -1) for x in X])
    assert np.all(idx >= 0)
    counts = np.bincount(idx, minlength=len(S))
    assert np.all(np.abs(counts - n * p) <= 3 * np.sqrt(n * p * (1 - p)))


def test_dataset_round_trip(tmp_path, caplog):
    v = Vocabulary.from_labels("ACG")
    path = tmp_path / "data.txt"
    path.write_text("# comment\nACG 0.5\nGGA 0.5  # trailing\n\n")
    m = load_dataset(path, v)
    assert m.sequences.tolist() == [[0, 1, 2], [2, 2, 0]]
    path.write_text(dump_dataset(m))
    assert load_dataset(path, v).masses.tolist() == [0.5, 0.5]
    path.write_text("ACG x\n")
    with pytest.raises(InvalidArgumentError, match=":1:"):
        load_dataset(path, v)
    path.write_text("ACG 1\nAC 1\n")
    with pytest.raises(InvalidArgumentError):
        load_dataset(path, v)
