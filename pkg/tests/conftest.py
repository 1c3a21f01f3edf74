import numpy as np
import pytest


def central_difference(f, x, step):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        grad.flat[i] = (f(x + e) - f(x - e)) / (2 * step)
    return grad


def fd_laplacian(f, x, step):
    x = np.asarray(x, dtype=np.float64)
    total = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        total += (f(x + e) - 2 * f(x) + f(x - e)) / step**2
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one summary line per acceptance criterion, filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
