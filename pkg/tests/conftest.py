from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

# single-core CI box; JAX tracing makes first calls slow
settings.register_profile("default", deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


def random_tuples(rng, n=4, offset=2.0):
    """Random quaternion coefficients with ``u`` shifted so that sigma stays positive."""
    t = rng.uniform(-1.0, 1.0, size=(n + 1, 4))
    t[:, 0] += offset
    return t


def quat_mul(p, q):
    # written out independently of the package
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.array([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ])


def conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def power_eval(tuples, xi):
    """Evaluate Bernstein tuples through the explicit binomial sum."""
    from math import comb

    n = len(tuples) - 1
    return sum(comb(n, i) * xi**i * (1 - xi) ** (n - i) * np.asarray(tuples[i]) for i in range(n + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixtures():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
