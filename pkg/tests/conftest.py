import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reduced_lab.dirichlet import FormMatrix, OperatorSpec, assemble, build_space

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def fix1():
    """B = [2], m = 1: the one-node Dirichlet Laplacian."""
    return assemble(build_space(1, (-1, 1), 1.0), OperatorSpec("local"))


@pytest.fixture
def fix2():
    """B = [[2, -1], [-1, 2]], m = (1, 1)."""
    return assemble(build_space(1, (-1.5, 1.5), 1.0), OperatorSpec("local"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def matrix_form(B, m=None):
    return FormMatrix.from_matrix(np.asarray(B, dtype=float), m)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
