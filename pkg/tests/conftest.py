import numpy as np
import pytest

from fragclass.curves import TimeGrid, standard_catalog
from fragclass.datagen import CurveModel, MissingMechanism, simulate

NMAR_30 = MissingMechanism("NMAR", {2: (2, 0.01, 0.8), 3: (2, 0.01, 0.4)})


@pytest.fixture
def grid():
    return TimeGrid(1001)


@pytest.fixture
def small_grid():
    return TimeGrid(201)


@pytest.fixture
def sim_small(small_grid):
    """60 curves with three patterns on a coarse grid."""
    return simulate(60, CurveModel(), NMAR_30, standard_catalog(3), np.random.default_rng(11), small_grid)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
