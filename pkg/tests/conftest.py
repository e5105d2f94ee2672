import numpy as np
import pytest

from gridsense.dynamics import MachineModel
from gridsense.experiments import WSCC9_FRAME, WSCC9_TRIP, setup
from gridsense.netmodel import ReducedNetwork


@pytest.fixture(scope="session")
def wscc9():
    return setup("wscc9", WSCC9_FRAME)


@pytest.fixture(scope="session")
def wscc9_post(wscc9):
    return wscc9.tripped(WSCC9_TRIP)


@pytest.fixture(scope="session")
def ieee39():
    return setup("ieee39")


def random_model(rng, n, lossless=False):
    """Small random machine model with a dissipative, reciprocal reduced network."""
    B = rng.uniform(0.5, 3.0, (n, n))
    B = 0.5 * (B + B.T)
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(B, -B.sum(axis=1) - rng.uniform(0.1, 0.5, n))
    G = np.zeros((n, n)) if lossless else 0.05 * rng.uniform(0, 1, (n, n))
    G = 0.5 * (G + G.T)
    if not lossless:
        np.fill_diagonal(G, rng.uniform(0.2, 1.0, n))
    Y = G + 1j * B
    E = rng.uniform(0.95, 1.1, n)
    M = rng.uniform(0.02, 0.2, n)
    D = rng.uniform(0.01, 0.1, n)
    Pm = np.zeros(n)
    return MachineModel(ReducedNetwork(Y, E), M, D, Pm)


#: one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
