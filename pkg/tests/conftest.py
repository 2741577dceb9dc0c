import numpy as np
import pytest

from gradphi.torus import TorusLattice


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[(1, 8), (2, 4), (2, 6), (3, 4)], ids=lambda p: f"d{p[0]}L{p[1]}")
def lattice(request):
    return TorusLattice(*request.param)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
