import numpy as np
import pytest

from epcadde.engine import solve
from epcadde.problems import builtin


@pytest.fixture(scope="session")
def example1():
    return builtin("example1")


@pytest.fixture(scope="session")
def example2():
    return builtin("example2")


@pytest.fixture(scope="session")
def solved(example1, example2):
    """Trajectories for both built-ins at the three reference mesh widths."""
    spec1, _, _ = example1
    spec2, _, _ = example2
    out = {}
    for h in (0.1, 0.01, 0.001):
        out[("example1", h)] = solve(spec1, h)
        out[("example2", h)] = solve(spec2, h)
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(20260819)
