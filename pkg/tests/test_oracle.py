import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varwave.coeffx import Bounds, CoefficientSet
from varwave.initdata import InitialData
from varwave.oracle import (AtomicMeasure, NonConstantCoefficients, TooManyAtoms, bl_bruteforce,
                            convergence_order, dalembert, pde_residual, speeds)
from conftest import gamma_u_cs, linear_cs


def test_symmetric_point():
    d = InitialData.from_text("exp(-x^2)", "0", 4.0)
    assert dalembert(linear_cs(), d, 0.0, 1.0) == pytest.approx(math.exp(-1), abs=1e-14)


def test_zero_data():
    d = InitialData.from_text("0", "0", 1.0)
    assert np.all(dalembert(linear_cs(), d, np.linspace(-2, 2, 9), 0.7) == 0)


def test_pulse_speed_with_beta():
    cs = CoefficientSet.from_text("1", "0.5", "1", Bounds(1, 1, 0.5, 1, 1))
    lm, lp = speeds(cs)
    assert lp == pytest.approx(0.5 + math.sqrt(1.25)) and lm == pytest.approx(0.5 - math.sqrt(1.25))
    d = InitialData.from_text("exp(-50*x^2)", "0", 2.0)
    xs = np.linspace(0.5, 3.0, 25001)
    u = dalembert(cs, d, xs, np.ones_like(xs))
    assert xs[np.argmax(u)] == pytest.approx(lp, abs=1e-3)


def test_pde_residual_with_velocity():
    cs = CoefficientSet.from_text("1.2", "0.3", "0.8", Bounds(1.2, 1.2, 0.3, 0.8, 0.8))
    d = InitialData.from_text("exp(-x^2)", "x*exp(-x^2)", 4.0)
    for x, t in ((0.0, 0.5), (0.7, 1.3), (-1.1, 2.0)):
        assert pde_residual(cs, d, x, t) <= 1e-8


def test_rejects_variable_coefficients():
    with pytest.raises(NonConstantCoefficients):
        dalembert(gamma_u_cs(), InitialData.from_text("0", "0", 1.0), 0.0, 1.0)


def test_bl_examples():
    A = AtomicMeasure((0.0,), (1.0,))
    assert bl_bruteforce(A, A) == 0.0
    assert bl_bruteforce(A, AtomicMeasure((0.5,), (1.0,))) == pytest.approx(0.5, abs=1e-12)
    assert bl_bruteforce(A, AtomicMeasure((), ())) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(TooManyAtoms):
        AtomicMeasure(tuple(range(17)), (1.0,) * 17)
    with pytest.raises(ValueError):
        AtomicMeasure((0.0,), (-1.0,))


_atoms = st.lists(st.tuples(st.floats(-1, 1), st.floats(0, 1)), min_size=0, max_size=4)


def _m(a):
    return AtomicMeasure(tuple(p for p, _ in a), tuple(m for _, m in a))


@settings(max_examples=40, deadline=None)
@given(_atoms, _atoms, _atoms)
def test_bl_symmetry_and_triangle(a, b, c):
    A, B, C = _m(a), _m(b), _m(c)
    ab = bl_bruteforce(A, B)
    assert ab == pytest.approx(bl_bruteforce(B, A), abs=2e-3)
    assert ab <= bl_bruteforce(A, C) + bl_bruteforce(C, B) + 2e-3


def test_convergence_order_examples(rng):
    assert convergence_order([(1, 1), (0.5, 0.25), (0.25, 0.0625)]) == pytest.approx(2.0, abs=1e-12)
    assert convergence_order([(1, 1), (0.5, 0.5)]) == pytest.approx(1.0, abs=1e-12)
    h = 0.5 ** np.arange(6)
    noisy = [(hh, 3 * hh**2 * (1 + 0.05 * rng.standard_normal())) for hh in h]
    assert 1.8 <= convergence_order(noisy) <= 2.2
    with pytest.raises(ValueError):
        convergence_order([(1, 0), (0.5, 1)])
    with pytest.raises(ValueError):
        convergence_order([(1, 1)])


def test_extrapolated_residual_on_steep_pulse():
    from varwave.oracle import pde_residual_extrapolated
    cs = CoefficientSet.from_text("1", "0.5", "1", Bounds(1, 1, 0.5, 1, 1))
    d = InitialData.from_text("exp(-50*x^2)", "x*exp(-x^2)", 2.0)
    # on the pulse the fixed-step truncation term dominates
    assert pde_residual(cs, d, 0.5, 0.5) > 1e-6
    assert pde_residual_extrapolated(cs, d, 0.5, 0.5) <= 1e-8
    for x in (0.9, 1.0, 1.2, -0.5):
        assert pde_residual_extrapolated(cs, d, x, 1.0) <= 1e-8
