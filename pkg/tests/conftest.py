import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pathmeasure import HeatKernel, Potential, SpatialGrid

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# lines collected by the acceptance tests, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid(-12.0, 12.0, 1025)


@pytest.fixture(scope="session")
def coarse_grid():
    return SpatialGrid(-12.0, 12.0, 257)


@pytest.fixture(scope="session")
def heat():
    return HeatKernel(1.0)


@pytest.fixture(scope="session")
def harmonic():
    return Potential.harmonic(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
