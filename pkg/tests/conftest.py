import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class Const:
    """Objective that ignores its input."""

    def __init__(self, value=0.0, name="const"):
        self.value = value
        self.name = name

    def evaluate(self, x):
        return self.value


class Plain:
    """Wraps a callable; no fast paths, so callers use full evaluation."""

    def __init__(self, fn, name="plain"):
        self.fn = fn
        self.name = name

    def evaluate(self, x):
        return float(self.fn(np.asarray(x)))


def joint_posterior_oracle(S, p, K, x, t, i, exponent=2.0):
    """p(x1[i] | x_t) by summing the joint over (x1, x0, mask) explicitly.

    The mixture path keeps x1[j] where the mask is 1 and x0[j] elsewhere,
    mask bits are Bernoulli(kappa) and x0 is uniform on all K**d sequences.
    """
    d = S.shape[1]
    kappa = t**exponent
    X0 = np.array(list(itertools.product(range(K), repeat=d)))
    Z = np.array(list(itertools.product((0, 1), repeat=d)), dtype=bool)
    pz = np.prod(np.where(Z, kappa, 1 - kappa), axis=1)
    out = np.zeros(K)
    for s, mass in zip(S, p):
        xt = np.where(Z[:, None, :], s[None, None, :], X0[None, :, :])  # (2^d, K^d, d)
        hit = np.all(xt == x, axis=-1)
        out[s[i]] += mass * float((pz[:, None] * hit).sum()) / K**d
    return out / out.sum()


ACCEPTANCE_LINES: list[str] = []


def acceptance(number: int, ok: bool, detail: str) -> None:
    """Record and print one criterion's verdict, then assert it."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
