import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mbloch.integrate import IntegratorConfig
from mbloch.model import FullState, PumpConfig, ReducedState, SystemParams

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def sample_params():
    return SystemParams(Omega=1.0, sigma=0.1, omega1=0.0, omega2=1.0, q=0.2)


@pytest.fixture
def sample_pump():
    return PumpConfig(Omega_p=1.0, cosine=(0.5,))


@pytest.fixture
def decoupled_params():
    # omega2 = 0.75 keeps omega * T away from a multiple of 2 pi
    return SystemParams(Omega=1.0, sigma=0.1, omega1=0.0, omega2=0.75, q=0.0)


@pytest.fixture
def zero_pump():
    return PumpConfig(Omega_p=1.0)


@pytest.fixture
def tight():
    return IntegratorConfig(abs_tol=1e-11, rel_tol=1e-11)


@pytest.fixture
def quick():
    return IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_molecules(rng, n):
    C = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    return C


def random_full(rng, n=1, radius=1.0):
    A, B = rng.normal(size=2) * radius
    return FullState(A=float(A), B=float(B), C=random_molecules(rng, n))


def random_reduced(rng, n=1, radius=1.0):
    s = rng.normal(size=(n, 3))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    A, B = rng.normal(size=2) * radius
    return ReducedState(A=float(A), B=float(B), s=s)
