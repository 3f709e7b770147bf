import math

import numpy as np
import pytest

from coagss.discretization import SampledFunction, build_grid
from coagss.kernels import KernelSpec
from coagss.solver import Profile, SolveOptions, solve_selfsimilar


def exp_profile(grid, kernel=None, amp=1.0, rate=1.0):
    """Node samples of ``amp * exp(-rate x)`` with the matching closure."""
    k = KernelSpec.constant() if kernel is None else kernel
    return Profile(SampledFunction(grid, amp * np.exp(-rate * grid.nodes), rate), k)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(1e-4, 60.0, 32)


@pytest.fixture(scope="session")
def oracle(grid32):
    return exp_profile(grid32)


@pytest.fixture(scope="session")
def constant_solution(grid32):
    return solve_selfsimilar(KernelSpec.constant(), grid32, SolveOptions())


@pytest.fixture(scope="session")
def brownian_solution(grid32):
    return solve_selfsimilar(KernelSpec.brownian(), grid32, SolveOptions())


BROWNIAN_IK = 2.0 + 4.0 * math.pi / (3.0 * math.sqrt(3.0))


@pytest.fixture(scope="session")
def brownian_ladder():
    """Converged Brownian profiles at 16, 32 and 64 points per decade."""
    return {ppd: solve_selfsimilar(KernelSpec.brownian(), build_grid(1e-4, 60.0, ppd))
            for ppd in (16, 32, 64)}


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
