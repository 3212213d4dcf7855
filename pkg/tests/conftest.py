import numpy as np
import pytest
from acceptance_log import LINES as ACCEPTANCE_LINES
from hypothesis import HealthCheck, settings

from datorus.anosov import eigen_split
from datorus.surgery import SurgeryParams, build_da_map

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")



@pytest.fixture(scope="session")
def model():
    return eigen_split()


@pytest.fixture(scope="session")
def da_map(model):
    return build_da_map(model)


@pytest.fixture(scope="session")
def linear_map(model):
    return build_da_map(model, SurgeryParams(enabled=False))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
