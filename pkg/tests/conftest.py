import numpy as np
import pytest

from csbsd import sensing


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_graph():
    """N=6, M=4, L=2 topology (shape of the small worked example)."""
    phi = np.array([
        [1, 0, -1, 0, 1, 0],
        [0, 1, 0, 1, 0, -1],
        [-1, 0, 0, 1, 0, 1],
        [0, -1, 1, 0, -1, 0],
    ], dtype=float)
    return sensing.from_dense(phi)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
