import numpy as np
import pytest

from diraclab.clifford import build_rep
from diraclab.torus import SpinStructure


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def rep2():
    return build_rep(2)


@pytest.fixture(scope="session")
def rep3():
    return build_rep(3)


@pytest.fixture(scope="session")
def half0():
    return SpinStructure((0.5, 0.0))


def random_spinor(rng, N):
    return rng.normal(size=N) + 1j * rng.normal(size=N)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
