import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("desk", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("desk")


@pytest.fixture(scope="session")
def mesh5():
    from dkplab.mesh import build_mesh

    return build_mesh(2, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines are collected here and repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
