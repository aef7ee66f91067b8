import numpy as np
import pytest

from ldos.models import build_gue_perturbation, build_haar_random, make_map_pair

# lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_pair(N, delta, seed=0, **kwargs):
    u = build_haar_random(N, seed)
    v = build_gue_perturbation(N, seed + 1000)
    return make_map_pair(u, v, delta, **kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pair16():
    # sigma * rho_E close to 2 for N = 16
    return random_pair(16, 0.8, seed=3)


@pytest.fixture(scope="session")
def pair32():
    return random_pair(32, 0.3, seed=5)
