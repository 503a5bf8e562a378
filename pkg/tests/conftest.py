import numpy as np
import pytest

from tentlab.grid import TimeGrid, make_grid
from tentlab.tent import BallFamily

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def grid32():
    return make_grid(2, 32)


@pytest.fixture(scope="session")
def grid64():
    return make_grid(2, 64)


@pytest.fixture(scope="session")
def grid3d():
    return make_grid(3, 16)


@pytest.fixture(scope="session")
def times32(grid32):
    return TimeGrid.default(grid32)


@pytest.fixture(scope="session")
def family32(grid32):
    return BallFamily.default(grid32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
