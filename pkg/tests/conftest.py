import numpy as np
import pytest

from fragrate.grid import WeightPair, make_grid
from fragrate.kernel import KernelSpec, Tabulated, Uniform
from fragrate.operators import assemble_T
from fragrate.profile import compute_profile, explicit_profile
from fragrate.splitting import select_parameters

W = WeightPair(0.75, 1.5)


def uniform(gamma, c=2.0):
    return KernelSpec(gamma, Uniform(c))


def linear_shape(gamma=1.0):
    # h(z) = 2 + 2z
    return KernelSpec(gamma, Tabulated((0.0, 1.0), (2.0, 4.0)))


@pytest.fixture(scope="session")
def weights():
    return W


@pytest.fixture(scope="session")
def spec1():
    return uniform(1.0)


@pytest.fixture(scope="session")
def grid512():
    return make_grid(1e-4, 50.0, 512)


@pytest.fixture(scope="session")
def T512(spec1, grid512):
    return assemble_T(spec1, grid512)


@pytest.fixture(scope="session")
def G_exact512(spec1, grid512):
    return explicit_profile(spec1, grid512)


@pytest.fixture(scope="session")
def G512(spec1, grid512, T512):
    return compute_profile(spec1, grid512, weights=W, T_h=T512)


@pytest.fixture(scope="session")
def params1(spec1):
    return select_parameters(spec1, 0.75)


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)

from hypothesis import settings  # noqa: E402

settings.register_profile("repo", derandomize=True, deadline=None)
settings.load_profile("repo")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
