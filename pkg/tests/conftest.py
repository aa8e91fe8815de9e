import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dynbc import ModelSpec, assemble_operators, build_interval_mesh, build_rect_mesh

settings.register_profile(
    "default",
    max_examples=30,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ALLEN_CAHN = [0.0, -1.0, 0.0, 1.0]

# Continuum Robin eigenvalue on [0, 1]: lam = k^2 with k tan(k/2) = 1,
# root found independently with mpmath at 30 digits.
LAMBDA_CONTINUUM_1D = 1.7070529755509225


@pytest.fixture(scope="session")
def ops21():
    return assemble_operators(build_interval_mesh(21))


@pytest.fixture(scope="session")
def ops101():
    return assemble_operators(build_interval_mesh(101))


@pytest.fixture(scope="session")
def ops201():
    return assemble_operators(build_interval_mesh(201))


@pytest.fixture(scope="session")
def ops2d():
    return assemble_operators(build_rect_mesh(9, 7, 1.0, 0.8))


@pytest.fixture
def allen_cahn0():
    return ModelSpec(0, ALLEN_CAHN)


@pytest.fixture
def allen_cahn1():
    return ModelSpec(1, ALLEN_CAHN)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def acceptance(capsys):
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def report(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
