import numpy as np
import pytest

from spectral_lab.model import Grid, PotentialSpec, assemble, eigendecompose


@pytest.fixture(scope="session")
def harmonic():
    return PotentialSpec.power_law(2.0)


@pytest.fixture(scope="session")
def harmonic_sys(harmonic):
    grid = Grid(1, 10.0, 1000)
    return eigendecompose(assemble(grid, harmonic), 40.0)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
