import numpy as np
import pytest
import scipy.linalg as la

from daeimor.linalg import dense
from daeimor.systems import Index2System


def tiny_system(C2=None, D=None):
    """Two velocities, one constraint x_a + x_b = 0."""
    return Index2System(np.eye(2), np.diag([-1.0, -2.0]), np.array([[1.0, 1.0]]),
                        np.array([[1.0], [0.0]]), np.array([[1.0, 0.0]]), C2=C2, D=D)


def dense_transfer(sys, s):
    """G(s) from a dense inverse of the embedded pencil; independent of the library's solvers."""
    n2 = sys.n2
    E = la.block_diag(dense(sys.E11), np.zeros((n2, n2)))
    A = np.block([[dense(sys.A11), dense(sys.A21).T], [dense(sys.A21), np.zeros((n2, n2))]])
    B = np.vstack([sys.B1, sys.B2])
    C = np.hstack([sys.C1, sys.C2])
    return C @ np.linalg.solve(s * E - A, B) + sys.D


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(a)


@pytest.fixture
def tiny():
    return tiny_system()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
