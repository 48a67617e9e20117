import numpy as np
import pytest
from hypothesis import strategies as st

from qsmooth.model import two_level_atom


@pytest.fixture
def atom():
    return two_level_atom(20.0, 1.0, 10 / 11, np.pi / 2)


@pytest.fixture
def excited():
    return np.diag([0.0, 1.0]).astype(complex)


def random_density(rng, d=2, rank=None):
    rank = rank or d
    a = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


@st.composite
def density_matrices(draw, d=2):
    seed = draw(st.integers(0, 2**32 - 1))
    rank = draw(st.integers(1, d))
    return random_density(np.random.default_rng(seed), d, rank)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
