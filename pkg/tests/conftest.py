import numpy as np
import pytest
from hypothesis import settings

from mincopula.prob_array import GridShape, ProbArray

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_prob_array(rng, d, n, zeros=0.0):
    """Random probability array; each cell is zeroed with probability ``zeros``."""
    w = rng.uniform(0.05, 1.0, size=(n,) * d)
    if zeros:
        w[rng.random(w.shape) < zeros] = 0.0
        if not w.any():
            w.flat[0] = 1.0
    return ProbArray(w / w.sum())


def random_copula_array(rng, d, n, sweeps=500):
    """Full-support copula array obtained by alternating margin scaling."""
    w = rng.uniform(0.1, 1.0, size=(n,) * d)
    for _ in range(sweeps):
        for ax in range(d):
            other = tuple(a for a in range(d) if a != ax)
            m = w.sum(axis=other, keepdims=True)
            w = w / (n * m)
    return ProbArray(w / w.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def p2():
    return ProbArray(np.array([[0.4, 0.1], [0.1, 0.4]]))


@pytest.fixture
def shape22():
    return GridShape(2, 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
