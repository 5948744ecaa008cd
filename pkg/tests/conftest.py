import math

import numpy as np
import pytest

from varwave.coeffx import Bounds, CoefficientSet
from varwave.initdata import InitialData, boundary_gamma0, s_grid
from varwave.goursat import solve

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def linear_cs():
    return CoefficientSet.from_text("1", "0", "1", Bounds(1, 1, 0, 1, 1))


def gamma_u_cs():
    return CoefficientSet.from_text("1", "0", "sqrt(1.5 + 0.5*sin(u))", Bounds(1, 1, 0, 1, math.sqrt(2)))


def cusp_cs():
    return CoefficientSet.from_text("1", "0", "sqrt(2 + sin(u))", Bounds(1, 1, 0, 1, math.sqrt(3)))


def solve_data(cs, d, T, delta, box=None):
    bd = boundary_gamma0(cs, d, s_grid(cs, box or d.L, T, delta))
    return solve(bd, cs, t_stop=T)


@pytest.fixture(scope="session")
def gaussian_linear():
    return linear_cs(), InitialData.from_text("exp(-x^2)", "0", 4.0)


@pytest.fixture(scope="session")
def smooth_state():
    cs = gamma_u_cs()
    d = InitialData.from_text("0.5*exp(-16*x^2)", "0.3*x*exp(-16*x^2)", 1.5)
    return cs, d, solve_data(cs, d, 1.0, 1 / 64)


@pytest.fixture(scope="session")
def cusp_state():
    cs = cusp_cs()
    d = InitialData.from_text("0.8*tanh(x/0.1)", "0", 1.0)
    return cs, d, solve_data(cs, d, 1.6, 1 / 128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
