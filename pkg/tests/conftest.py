import numpy as np
import pytest

from accelfb import core, problems


def bisect_prox_l1(weight, step, y, iters=200):
    """Minimizer of (u - y)^2 / (2 step) + weight |u| by bisection on its subdifferential."""
    lo, hi = -abs(y) - 1.0, abs(y) + 1.0

    def right_derivative(u):
        return (u - y) / step + (weight if u >= 0 else -weight)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if right_derivative(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-300:
            break
    u = 0.5 * (lo + hi)
    # 0 is optimal whenever the subdifferential at 0 contains 0
    if abs(y) / step <= weight:
        return 0.0
    return u


def quadratic_problem(dim=1):
    """Phi = 1/2 ||x||^2, Psi = 0; x* = 0."""
    return core.SplitProblem(core.quadratic_smooth(np.ones(dim)), core.zero_term(), dim,
                             reference_minimizer=np.zeros(dim))


def quadratic_l1_problem(weight=1.0, dim=1):
    """Phi = 1/2 ||x||^2, Psi = weight ||x||_1; x* = 0."""
    return core.SplitProblem(core.quadratic_smooth(np.ones(dim)), core.l1_term(weight), dim,
                             reference_minimizer=np.zeros(dim))


@pytest.fixture(scope="session")
def lasso():
    return problems.make_lasso()


@pytest.fixture(scope="session")
def quadratic():
    return problems.make_quadratic(20, 1e4)


@pytest.fixture(scope="session")
def degenerate():
    return problems.make_degenerate_quadratic(20, 5)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
