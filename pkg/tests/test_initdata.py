import math

import numpy as np
import pytest

from varwave.coeffx import Bounds, CoefficientSet
from varwave.dual import eval_d2
from varwave.expr import parse_expr
from varwave.initdata import (InitialData, InitialDataError, boundary_from_riemann, boundary_gamma0,
                              compatibility_residuals, initial_energy, read_samples_csv, riemann_initial, s_grid)
from conftest import gamma_u_cs, linear_cs


def test_zero_data_riemann():
    R, S = riemann_initial(linear_cs(), InitialData.from_text("0", "0", 1.0), np.linspace(-1, 1, 5))
    assert np.all(R == 0) and np.all(S == 0)


def test_u1_only_gives_equal_invariants():
    d = InitialData.from_text("0", "sin(x)", 2.0)
    xs = np.linspace(-2, 2, 9)
    R, S = riemann_initial(linear_cs(), d, xs)
    assert np.allclose(R, np.sin(xs), atol=1e-15) and np.allclose(S, np.sin(xs), atol=1e-15)


def test_gaussian_invariants():
    d = InitialData.from_text("exp(-x^2)", "0", 4.0)
    assert riemann_initial(linear_cs(), d, 0.0) == (0.0, 0.0)
    R, S = riemann_initial(linear_cs(), d, 1.0)
    ref = eval_d2(parse_expr("exp(-x^2)"), 1.0, 0.0).d_x
    assert ref == pytest.approx(-2 / math.e, rel=1e-14)
    assert R == pytest.approx(ref, rel=1e-12) and S == pytest.approx(-ref, rel=1e-12)


def test_zero_boundary():
    cs = linear_cs()
    bd = boundary_gamma0(cs, InitialData.from_text("0", "0", 1.0), s_grid(cs, 1.0, 1.0, 1 / 16))
    assert np.all(bd.h == 1) and np.all(bd.g == 1) and np.all(bd.l == 0) and np.all(bd.m == 0)
    assert np.all(bd.p == 1) and np.all(bd.q == 1) and np.all(bd.u == 0)


def test_substitution_R_equals_one():
    bd = boundary_from_riemann([-1, 0, 1], [0, 0, 0], [0, 1, 0], [0, 0, 0])
    assert (bd.h[1], bd.l[1], bd.p[1]) == (0.5, 0.5, 2.0)


def test_gaussian_boundary_on_circle():
    cs = linear_cs()
    bd = boundary_gamma0(cs, InitialData.from_text("exp(-x^2)", "0", 4.0), s_grid(cs, 4.0, 1.0, 1 / 64))
    for a in (bd.u, bd.l, bd.m, bd.h, bd.g, bd.p, bd.q):
        assert np.all(np.isfinite(a))
    assert np.max(np.abs(bd.l**2 + bd.h**2 - bd.h)) <= 1e-14
    assert np.max(np.abs(bd.m**2 + bd.g**2 - bd.g)) <= 1e-14
    assert np.max(np.abs(bd.p * bd.h - 1)) <= 1e-14


def test_compatibility_residuals_second_order():
    cs = gamma_u_cs()
    d = InitialData.from_text("0.5*exp(-16*x^2)", "0.3*x*exp(-16*x^2)", 1.5)
    ru = []
    for delta in (1 / 64, 1 / 128):
        bd = boundary_gamma0(cs, d, s_grid(cs, 1.5, 1.0, delta))
        r_u, r_x, r_t = compatibility_residuals(bd, cs)
        ru.append(np.max(np.abs(r_u)))
        assert np.max(np.abs(r_x)) <= 1e-12 and np.max(np.abs(r_t)) <= 1e-12
    assert 3.0 <= ru[0] / ru[1] <= 5.0


def test_s_grid_symmetric_and_validated():
    cs = linear_cs()
    s = s_grid(cs, 1.0, 0.5, 0.125)
    assert len(s) % 2 == 1 and s[0] == -s[-1] and s[len(s) // 2] == 0
    assert s[-1] >= 1.0 + 2 * 0.5
    with pytest.raises(InitialDataError):
        s_grid(cs, 1.0, 0.5, 0.0)
    with pytest.raises(InitialDataError):
        boundary_gamma0(cs, InitialData.from_text("0", "0", 1), np.array([0.0, 0.1, 0.3]))


def test_initial_energy_gaussian():
    # integral of (2x e^{-x^2})^2 = sqrt(pi/2)
    E0 = initial_energy(linear_cs(), InitialData.from_text("exp(-x^2)", "0", 6.0))
    assert E0 == pytest.approx(math.sqrt(math.pi / 2), rel=1e-8)


def test_csv_samples(tmp_path):
    xs = np.linspace(-1, 1, 201)
    p = tmp_path / "d.csv"
    np.savetxt(p, np.c_[xs, np.sin(np.pi * xs) ** 2, 0 * xs], delimiter=",", header="x,u0,u1", comments="")
    d = read_samples_csv(p)
    assert d.u0_at(0.5) == pytest.approx(1.0, abs=1e-12)
    assert d.u0x_at(0.25) == pytest.approx(np.pi, rel=1e-3)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(InitialDataError):
        read_samples_csv(bad)
