import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from syncwave.spectral import ModelDomain, build_basis

settings.register_profile("repo", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

DOMAINS = [
    ("interval", "dirichlet", "laplacian"),
    ("interval", "neumann", "laplacian"),
    ("interval", "dirichlet", "hinged"),
    ("rectangle", "dirichlet", "laplacian"),
    ("rectangle", "neumann", "laplacian"),
    ("rectangle", "dirichlet", "hinged"),
]

# acceptance lines collected by tests/test_acceptance.py and echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def basis_for(kind, M):
    return build_basis(ModelDomain(*kind), M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
