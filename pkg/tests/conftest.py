import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kglab.spectral import RocklandSymbol
from kglab.structure import DilationStructure, make_grid

settings.register_profile("kglab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kglab")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


@pytest.fixture
def line_grid():
    D = DilationStructure([1])
    return make_grid(D, [2 * np.pi], [32])


@pytest.fixture
def laplacian_1d():
    return RocklandSymbol.laplacian(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
