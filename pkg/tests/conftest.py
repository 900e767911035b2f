import sys

import numpy as np
import pytest

from qma.solver import solve_linear_n1, solve_qma
from qma.torus import SpectralGrid, Torus, harmonic_field

DEFAULT_F = ((1, 1, 0.5, 0.0), (5, 1, 0.5, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_n2():
    """The reduced n = 2 default problem, solved once per session."""
    grid = SpectralGrid.from_labels(2, (1, 5), 64)
    torus = Torus(grid)
    F = harmonic_field(grid, DEFAULT_F)
    return torus, F, solve_qma(torus, F)


@pytest.fixture(scope="session")
def small_n2():
    grid = SpectralGrid.from_labels(2, (1, 5), 32)
    torus = Torus(grid)
    F = harmonic_field(grid, DEFAULT_F)
    return torus, F, solve_qma(torus, F)


@pytest.fixture(scope="session")
def solved_n1():
    grid = SpectralGrid.from_labels(1, (1, 2), 32)
    torus = Torus(grid)
    F = harmonic_field(grid, ((1, 1, 0.4, 0.0), (2, 2, 0.3, 1.0)))
    return torus, F, solve_linear_n1(torus, F)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for num in sorted(verdicts):
            terminalreporter.write_line(verdicts[num])
