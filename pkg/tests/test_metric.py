import math

import numpy as np
import pytest
from scipy.integrate import quad

from varwave.coeffx import Bounds, CoefficientSet
from varwave.goursat import solve
from varwave.initdata import InitialData, boundary_gamma0, s_grid
from varwave.metric import (DegeneratePath, MetricWeights, RefusesSingularSlice, constant_C1, constant_C2,
                            constant_C3, integrands_XY, interaction_integrals, kr_dist, l1_dist, lipschitz_ratio,
                            node_norms, path_length, potential_decay, potentials, sobolev_bound, tangent_norm,
                            tangent_norm_physical)
from varwave.physmap import extract_slice
from varwave.variation import PhysicalTangent, fd_perturbation, linear_rs_path, physical_tangent, trimmed
from conftest import gamma_u_cs, linear_cs, solve_data

A = InitialData.from_text("exp(-16*x^2)", "0", 1.5)
B = InitialData.from_text("0.5*exp(-16*(x-0.2)^2)", "0.3*exp(-16*x^2)", 1.5)


@pytest.fixture(scope="module")
def zero_slice():
    cs = linear_cs()
    st = solve(boundary_gamma0(cs, InitialData.from_text("0", "0", 1.0), np.arange(-80, 81) / 40.0), cs)
    return cs, extract_slice(st, 0.5)


@pytest.fixture(scope="module")
def gamma_path():
    return linear_rs_path(gamma_u_cs(), A, B, 4, delta=1 / 64, T=1.0)


def test_weights():
    w = MetricWeights.default()
    assert w.kappa == pytest.approx((1, 0.1, 1e-4, 1e-2, 1e-2, 1e-3, 1e-4))
    with pytest.raises(ValueError):
        MetricWeights((1, 1, 1, 1, 1, 1, 2))
    assert MetricWeights((1, 1, 1, 1, 1, 1, 2), custom=True).kappa[6] == 2
    with pytest.raises(ValueError):
        MetricWeights((1, 1, 1, 1, 1, 1, 0), custom=True)
    with pytest.raises(ValueError):
        MetricWeights.default(1.5)


def test_zero_solution_potentials(zero_slice):
    cs, sl = zero_slice
    pot = potentials(sl)
    assert np.all(pot.Wm == 1) and np.all(pot.Wp == 1)
    assert interaction_integrals(sl, cs) == (0.0, 0.0)


def test_right_moving_pulse_potential():
    # u1 = u0x gives S = 0, R = 2 u0x: a pure right-moving pulse
    cs = linear_cs()
    d = InitialData.from_text("exp(-16*x^2)", "-32*x*exp(-16*x^2)", 2.0)
    sl = extract_slice(solve_data(cs, d, 0.6, 1 / 128), 0.5)
    mass = quad(lambda x: (64 * x * math.exp(-16 * x * x)) ** 2, -3, 3)[0]
    pot = potentials(sl)
    assert pot.Wp[0] == pytest.approx(1 + mass, rel=1e-3)
    assert pot.Wp[-1] == 1.0
    assert np.max(np.abs(pot.Wm - 1)) <= 1e-10


def test_potential_monotone_on_cusp(cusp_state, rng):
    cs, d, st = cusp_state
    for tau in rng.uniform(0, 1.55, 6):
        pot = potentials(extract_slice(st, tau))
        assert np.all(np.diff(pot.Wm) >= 0) and np.all(np.diff(pot.Wp) <= 0)
        assert pot.Wm.min() >= 1 and pot.Wp.min() >= 1


def test_interaction_integrals():
    cs = linear_cs()
    d = InitialData.from_text("exp(-16*x^2)", "0", 1.5)
    assert interaction_integrals(extract_slice(solve_data(cs, d, 1.0, 1 / 32), 0.5), cs) == (0.0, 0.0)
    cs = gamma_u_cs()
    vals = [interaction_integrals(extract_slice(solve_data(cs, B, 0.5, dl, 1.5), 0.3), cs) for dl in (1 / 64, 1 / 128)]
    assert min(vals[1]) > 0
    assert vals[0][0] == pytest.approx(vals[1][0], rel=2e-2)
    assert vals[0][1] == pytest.approx(vals[1][1], rel=2e-2)


def test_time_relabel_integrands(zero_slice):
    cs, sl = zero_slice
    c = 0.7
    P = {n: np.zeros(len(sl)) for n in ("U", "L", "M", "H", "G", "P", "Q", "Xc", "Tc")}
    P["Tc"][:] = c
    J, H = integrands_XY(sl, P, cs)
    assert np.allclose(np.abs(J[0]), c, atol=1e-15) and np.allclose(np.abs(H[0]), c, atol=1e-15)
    nb = tangent_norm(sl, P, cs)
    span = sl.X[-1] - sl.X[0]
    assert nb.minus[0] == pytest.approx(c * span, rel=1e-12)
    P0 = {n: np.zeros(len(sl)) for n in P}
    assert tangent_norm(sl, P0, cs).total == 0.0


def test_physical_spatial_relabel(zero_slice):
    cs, sl = zero_slice
    one, zero = np.ones(len(sl)), np.zeros(len(sl))
    pt = PhysicalTangent(w=one, z=one, U=zero, rhat=zero, shat=zero, singular=zero.astype(bool), pert={})
    nb = tangent_norm_physical(sl, pt, cs)
    span = sl.x[-1] - sl.x[0]
    assert nb.terms[0] == pytest.approx(2 * span, rel=1e-12)
    assert nb.terms[1] == pytest.approx(2 * span, rel=1e-12)
    assert all(t <= 1e-10 for t in nb.terms[2:])
    pz = PhysicalTangent(w=zero, z=zero, U=zero, rhat=zero, shat=zero, singular=zero.astype(bool), pert={})
    assert tangent_norm_physical(sl, pz, cs).total == 0


def test_physical_refuses_singular(cusp_state):
    cs, d, st = cusp_state
    sl = extract_slice(st, 1.4)
    assert sl.singular.any()
    zero = np.zeros(len(sl))
    pt = PhysicalTangent(zero, zero, zero, zero, zero, sl.singular, {})
    with pytest.raises(RefusesSingularSlice):
        tangent_norm_physical(sl, pt, cs)


def test_homogeneity_and_cross_representation(gamma_path):
    cs = gamma_path.cs
    for k in (0, 2):
        pe = fd_perturbation(gamma_path, k)
        sl = extract_slice(trimmed(gamma_path.state(k), pe.rows), 0.5)
        base = tangent_norm(sl, pe, cs)
        scaled = tangent_norm(sl, pe.scaled(2.5), cs)
        assert all(b2 == pytest.approx(2.5 * b1, rel=1e-14, abs=1e-300) for b1, b2 in zip(base.terms, scaled.terms))
        phys = tangent_norm_physical(sl, physical_tangent(sl, pe, cs), cs)
        assert abs(phys.total - base.total) / base.total <= 0.01


def test_constant_path_degenerate():
    P = linear_rs_path(gamma_u_cs(), A, A, 2, delta=1 / 32, T=0.5)
    assert path_length(P, 0.2) <= 1e-9
    with pytest.raises(DegeneratePath):
        lipschitz_ratio(P, [0.2], floor=1e-6)


def test_constant_coefficient_lipschitz():
    P = linear_rs_path(linear_cs(), A, B, 4, delta=1 / 64, T=1.0)
    rep = lipschitz_ratio(P, [0.25, 0.5, 0.9])
    assert rep.ratio <= 1 + 2 / 64
    assert rep.taus[0] == 0.0


def test_path_length_continuous_in_tau(gamma_path):
    L = [path_length(gamma_path, t) for t in (0.5, 0.51)]
    assert abs(L[1] - L[0]) / L[0] <= 0.02


def test_node_norms_shape(gamma_path):
    assert node_norms(gamma_path, [0.0, 0.5]).shape == (5, 2)


def test_l1_dist():
    cs = linear_cs()
    bump = "0.2*4/sqrt(3.141592653589793)*exp(-16*x^2)"
    dA = InitialData.from_text("0.1*exp(-4*x^2)", "0", 2.0)
    dB = InitialData.from_text(f"0.1*exp(-4*x^2) + {bump}", "0", 2.0)
    sA = extract_slice(solve_data(cs, dA, 0.1, 1 / 128), 0.0)
    sB = extract_slice(solve_data(cs, dB, 0.1, 1 / 128), 0.0)
    assert l1_dist(sA, sA) == 0.0
    assert l1_dist(sA, sB) == pytest.approx(0.2, abs=1e-4)
    assert l1_dist(sA, sB) == l1_dist(sB, sA)


def test_sobolev_bound():
    assert sobolev_bound(A, A) == 0.0
    phi = lambda x: 4 / math.sqrt(math.pi) * math.exp(-16 * x * x)
    l2 = math.sqrt(quad(lambda x: phi(x) ** 2, -2, 2)[0])
    dB = InitialData.from_text("exp(-16*x^2)", "4/sqrt(3.141592653589793)*exp(-16*x^2)", 1.5)
    assert sobolev_bound(A, dB) == pytest.approx(1 + l2, rel=1e-6)
    d2 = InitialData.from_text("exp(-16*x^2)", "8/sqrt(3.141592653589793)*exp(-16*x^2)", 1.5)
    assert sobolev_bound(A, d2) == pytest.approx(2 * sobolev_bound(A, dB), rel=1e-12)
    assert sobolev_bound(A, InitialData.from_text("tanh(x)", "0", 1.5)) == math.inf


def test_kr_examples(cusp_state):
    assert kr_dist(([0.0], [1.0]), ([0.5], [1.0])) == pytest.approx(0.5, abs=1e-12)
    assert kr_dist(([0.0], [1.0]), ([], [])) == pytest.approx(1.0, abs=1e-12)
    cs, d, st = cusp_state
    sl = extract_slice(st, 0.5)
    assert kr_dist(sl, sl, cs) == pytest.approx(0.0, abs=1e-12)
    assert kr_dist(sl, extract_slice(st, 0.6), cs) > 0


def test_constants():
    cs = gamma_u_cs()
    w = MetricWeights.default()
    b = cs.bounds
    assert constant_C1(cs, w) == pytest.approx(max(1e4, b.alpha2**2 / (2 * b.gamma1 * 0.1)), rel=1e-14)
    assert constant_C2(linear_cs(), w) == pytest.approx(1e4)
    # beta = 0 keeps the energy weights at 1/2, so only beta != 0 adds to the base value
    ab = CoefficientSet.from_text("1 + 0.2*sin(u)", "0.3*cos(u)", "1", Bounds(0.8, 1.2, 0.3, 1, 1), (-2, 2, -2, 2))
    assert constant_C2(cs, w) == pytest.approx(1e4)
    assert constant_C2(ab, w) > 1e4
    c3 = constant_C3(cs, A, B, w, 1.0, 1 / 64)
    assert np.isfinite(c3) and c3 > 0


def test_potential_decay(smooth_state):
    cs, d, st = smooth_state
    rep = potential_decay(st, cs, np.linspace(0, 0.95, 20), np.linspace(-1, 1, 9))
    assert rep.n_chars >= 9 and rep.n_points > 0
    assert rep.fraction >= 0.95
