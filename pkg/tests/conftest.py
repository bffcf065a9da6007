import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from paneitz_lab.morse_analyzer import CurvatureField

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def quad6():
    """Quadratic family on S^6 with distinct coefficients and nonzero Laplacians."""
    return CurvatureField.quadratic_family(6, [0.1, 0.2, -0.1, 0.05, 0.0, -0.15, 0.3])


@pytest.fixture(scope="session")
def quad5():
    return CurvatureField.quadratic_family(5, [0.3, 0.2, -0.1, 0.07, 0.0, -0.15])


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
