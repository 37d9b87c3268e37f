import numpy as np
import pytest

from eqforge.leaf import seed_leaf
from eqforge.systems import cat_map, katok_map

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def cat():
    return cat_map()


@pytest.fixture(scope="session")
def katok():
    return katok_map()


@pytest.fixture(scope="session")
def cat_leaf(cat):
    return seed_leaf(cat, (0.5, 0.5), 0.3, 2.5e-4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
