"""Finsler tangent norm, path lengths and comparison distances.

All distances produced here are upper bounds: they are lengths of one
specific path family in the canonical shift gauge, with no optimisation
over relabelings.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import simpson
from scipy.optimize import linprog

from . import _march_py
from .coeffx import CoefficientSet, derived_at
from .initdata import InitialData, riemann_initial, s_grid
from .physmap import TimeSlice, extract_slice, sample_u
from .variation import PathOfSolutions, PhysicalTangent, fd_perturbation, physical_tangent, trimmed

EPS_FLOOR = 1e-12


class DegeneratePath(ValueError):
    pass


class RefusesSingularSlice(ValueError):
    pass


@dataclass(frozen=True)
class MetricWeights:
    kappa: tuple
    delta: float = 0.1
    custom: bool = False

    @classmethod
    def default(cls, delta: float = 0.1):
        d = float(delta)
        return cls((1.0, d, d**4, d**2, d**2, d**3, d**4), d)

    def __post_init__(self):
        if len(self.kappa) != 7 or any(not (k > 0) for k in self.kappa):
            raise ValueError("need seven positive weights")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.custom:
            k = self.kappa
            # k0 >= k1 >= k3, k4 >= k5 >= k2, k6
            ordered = k[0] >= k[1] >= max(k[3], k[4]) and min(k[3], k[4]) >= k[5] >= max(k[2], k[6])
            if not ordered:
                raise ValueError("weights break the ordering k0 >= k1 >= k3,k4 >= k5 >= k2,k6; pass custom=True")


@dataclass
class PotentialField:
    Wm: np.ndarray
    Wp: np.ndarray


def potentials(sl: TimeSlice) -> PotentialField:
    """W- = 1 + S^2-mass to the left, W+ = 1 + R^2-mass to the right (trapezoid per segment)."""
    s2 = sl.s2_dx()
    r2 = sl.r2_dx()
    Wm = 1.0 + np.concatenate([[0.0], np.cumsum(s2)])
    Wp = 1.0 + np.concatenate([np.cumsum(r2[::-1])[::-1], [0.0]])
    return PotentialField(Wm, Wp)


def _trap(f, w):
    """Trapezoid sum of sample values f against per-segment measure w."""
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * w))


def interaction_integrals(sl: TimeSlice, cs: CoefficientSet):
    """(G1, G2) as absolute-value integrals over the slice; flagged samples contribute zero."""
    a, c1, c2, a1, a2, b, d1, d2, e = sl.coefficients(cs)
    dc = derived_at(cs, sl.values["x"], sl.values["u"])
    cd = c2 - c1
    sing = sl.singular
    R = np.where(sing, 0.0, np.nan_to_num(sl.R))
    S = np.where(sing, 0.0, np.nan_to_num(sl.S))
    Dp = (c2 * dc.dx_c1 - c1 * dc.dx_c2) / (a * cd)
    g1 = np.abs(2 * a1 / a * (R * S * S - R * R * S) + 2 * c1 * b / a * R * S - Dp * S * S)
    g2 = np.abs(2 * a2 / a * (R * S * S - R * R * S) + 2 * c2 * b / a * R * S - Dp * R * R)
    # dx = p h dX along the slice
    ph = sl.values["p"] * sl.values["h"]
    return _trap(g1 * ph, sl.dX), _trap(g2 * ph, sl.dX)


@dataclass
class NormBreakdown:
    minus: list
    plus: list
    weights: MetricWeights
    representation: str

    @property
    def terms(self):
        return [m + p for m, p in zip(self.minus, self.plus)]

    @property
    def total(self) -> float:
        return float(sum(k * t for k, t in zip(self.weights.kappa, self.terms)))

    def as_dict(self) -> dict:
        return {"representation": self.representation, "minus": self.minus, "plus": self.plus,
                "terms": self.terms, "total": self.total, "kappa": list(self.weights.kappa)}


def _kx(dc, a):
    k1 = (dc.c1 * dc.dx_alpha - a * dc.dx_c1) / (2 * a)
    k2 = (dc.c2 * dc.dx_alpha - a * dc.dx_c2) / (2 * a)
    return k1, k2


def integrands_XY(sl: TimeSlice, P: dict, cs: CoefficientSet):
    """Division-free J_0..J_6 and H_0..H_6 at the slice samples."""
    v = sl.values
    u, l, m, h, g, p, q = (v[n] for n in ("u", "l", "m", "h", "g", "p", "q"))
    dc = derived_at(cs, v["x"], u)
    a, c1, c2, a1, a2, d1, d2 = dc.alpha, dc.c1, dc.c2, dc.a1, dc.a2, dc.d1, dc.d2
    cd = c2 - c1
    k1, k2 = _kx(dc, a)
    D = (c1 * dc.dx_c2 - c2 * dc.dx_c1) / (a * cd)
    U, L, M, H, G, Pp, Q, Xc, Tc = (P[n] for n in ("U", "L", "M", "H", "G", "P", "Q", "Xc", "Tc"))
    w = Xc - c1 / a * Tc
    z = Xc - c2 / a * Tc
    lHp = 2 * p * ((1 - h) * L + l * H)   # (l H / h) p
    mGq = 2 * q * ((1 - g) * M + m * G)   # (m G / g) q
    J = [
        w * p * h,
        w * p,
        U * p,
        L * p - lHp - Tc * p / a * (a1 - a1 * h - d1 * l),
        h * Pp + p * H + 2 * p * Tc / a * (a1 * l + k1 * h),
        l * Pp + lHp + 2 * p * Tc / a * (a1 * (1 - h) + k1 * l),
        (1 - h) * Pp - p * H - D * Tc * p * (1 - h),
    ]
    Hk = [
        z * q * g,
        z * q,
        U * q,
        M * q - mGq - Tc * q / a * (-a2 + a2 * g - d2 * m),
        g * Q + q * G + 2 * q * Tc / a * (-a2 * m + k2 * g),
        m * Q + mGq + 2 * q * Tc / a * (-a2 * (1 - g) + k2 * m),
        (1 - g) * Q - q * G - D * Tc * q * (1 - g),
    ]
    return J, Hk


def tangent_norm(sl: TimeSlice, pert, cs: CoefficientSet, weights: MetricWeights | None = None) -> NormBreakdown:
    """sum_k kappa_k (int |J_k| W- dX + int |H_k| W+ (-dY)) along the slice."""
    weights = weights or MetricWeights.default()
    P = pert.on_slice(sl) if not isinstance(pert, dict) else pert
    J, Hk = integrands_XY(sl, P, cs)
    pot = potentials(sl)
    minus = [_trap(np.abs(j) * pot.Wm, sl.dX) for j in J]
    plus = [_trap(np.abs(hk) * pot.Wp, sl.mdY) for hk in Hk]
    return NormBreakdown(minus, plus, weights, "XY")


def tangent_norm_physical(sl: TimeSlice, pt: PhysicalTangent, cs: CoefficientSet,
                          weights: MetricWeights | None = None) -> NormBreakdown:
    """I_0..I_6 by quadrature in x with w_x, z_x from centered differences along the slice."""
    weights = weights or MetricWeights.default()
    if np.any(sl.singular):
        raise RefusesSingularSlice("slice has samples with h or g below eps_sing")
    v = sl.values
    x = v["x"]
    if np.any(np.diff(x) <= 0):
        raise RefusesSingularSlice("x is not strictly increasing along the slice")
    dc = derived_at(cs, x, v["u"])
    a1, a2, cd = dc.a1, dc.a2, dc.c2 - dc.c1
    R, S = sl.R, sl.S
    pot = potentials(sl)
    Wm, Wp = pot.Wm, pot.Wp
    w, z = pt.w, pt.z
    wx = np.gradient(w, x, edge_order=2)
    zx = np.gradient(z, x, edge_order=2)
    sh = w - z
    Ucomb = np.abs(pt.U)
    fm = [
        np.abs(w) * Wm,
        np.abs(w) * (1 + R * R) * Wm,
        Ucomb * (1 + R * R) * Wm,
        np.abs(pt.rhat) * Wm,
        np.abs(wx + 2 * a1 * sh / cd * S) * Wm,
        np.abs(R * wx + 2 * a1 * sh / cd * R * S) * Wm,
        np.abs(2 * R * pt.rhat + R * R * wx + 2 * a1 * sh / cd * R * R * S) * Wm,
    ]
    fp = [
        np.abs(z) * Wp,
        np.abs(z) * (1 + S * S) * Wp,
        Ucomb * (1 + S * S) * Wp,
        np.abs(pt.shat) * Wp,
        np.abs(zx - 2 * a2 * sh / cd * R) * Wp,
        np.abs(S * zx - 2 * a2 * sh / cd * R * S) * Wp,
        np.abs(2 * S * pt.shat + S * S * zx - 2 * a2 * sh / cd * R * S * S) * Wp,
    ]
    dx = np.diff(x)
    return NormBreakdown([_trap(f, dx) for f in fm], [_trap(f, dx) for f in fp], weights, "physical")


def node_breakdowns(path: PathOfSolutions, taus, weights: MetricWeights | None = None,
                    representation: str = "XY") -> list:
    """[node][tau] NormBreakdown along the path, nodes visited in order (cache friendly)."""
    weights = weights or MetricWeights.default()
    taus = [float(t) for t in np.atleast_1d(taus)]
    out = []
    for k in range(len(path.thetas)):
        pert = fd_perturbation(path, k)
        st = trimmed(path.state(k), pert.rows)
        row = []
        for tau in taus:
            sl = extract_slice(st, tau)
            if representation == "XY":
                row.append(tangent_norm(sl, pert, path.cs, weights))
            else:
                pt = physical_tangent(sl, pert, path.cs)
                row.append(tangent_norm_physical(sl, pt, path.cs, weights))
        out.append(row)
    return out


def node_norms(path: PathOfSolutions, taus, weights: MetricWeights | None = None, representation: str = "XY"):
    """(n_nodes, n_tau) array of tangent norm totals."""
    bd = node_breakdowns(path, taus, weights, representation)
    return np.array([[b.total for b in row] for row in bd])


def integrate_breakdowns(path: PathOfSolutions, rows: list) -> list:
    """Composite Simpson in theta of each term, one NormBreakdown per tau."""
    th = np.asarray(path.thetas, dtype=float)
    out = []
    for n in range(len(rows[0])):
        first = rows[0][n]
        minus = [float(simpson([r[n].minus[t] for r in rows], x=th)) for t in range(7)]
        plus = [float(simpson([r[n].plus[t] for r in rows], x=th)) for t in range(7)]
        out.append(NormBreakdown(minus, plus, first.weights, first.representation))
    return out


def path_breakdowns(path: PathOfSolutions, taus, weights: MetricWeights | None = None) -> list:
    return integrate_breakdowns(path, node_breakdowns(path, taus, weights))


def path_lengths(path: PathOfSolutions, taus, weights: MetricWeights | None = None) -> np.ndarray:
    """Composite Simpson in theta of the node norms, one value per tau."""
    norms = node_norms(path, taus, weights)
    return np.array([simpson(norms[:, n], x=path.thetas) for n in range(norms.shape[1])])


def path_length(path: PathOfSolutions, tau: float, weights: MetricWeights | None = None) -> float:
    return float(path_lengths(path, [tau], weights)[0])


@dataclass
class LipschitzReport:
    taus: list
    lengths: list
    ratio: float


def lipschitz_ratio(path: PathOfSolutions, taus, weights: MetricWeights | None = None,
                    floor: float = EPS_FLOOR) -> LipschitzReport:
    taus = [float(t) for t in taus]
    all_t = [0.0] + [t for t in taus if t != 0.0]
    L = path_lengths(path, all_t, weights)
    if L[0] < floor:
        raise DegeneratePath(f"path length at tau=0 is {L[0]:.3e} < {floor:.1e}")
    return LipschitzReport(all_t, [float(v) for v in L], float(np.max(L / L[0])))


# -- comparison distances ---------------------------------------------------

def _abs_pwl_integral(x, f):
    """Exact integral of |f| for f piecewise linear on nodes x."""
    f0, f1 = f[:-1], f[1:]
    dx = np.diff(x)
    same = f0 * f1 >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = dx * (f0 * f0 + f1 * f1) / (2 * (np.abs(f0) + np.abs(f1)))
    val = np.where(same, 0.5 * dx * (np.abs(f0) + np.abs(f1)), np.nan_to_num(cross))
    return float(np.sum(val))


def l1_dist(slA: TimeSlice, slB: TimeSlice) -> float:
    """int |u_A - u_B| dx over the common x-range, resampled to the union grid."""
    xa, xb = slA.values["x"], slB.values["x"]
    lo, hi = max(xa[0], xb[0]), min(xa[-1], xb[-1])
    if hi <= lo:
        raise ValueError("slices do not overlap in x")
    grid = np.union1d(xa[(xa >= lo) & (xa <= hi)], xb[(xb >= lo) & (xb <= hi)])
    grid = np.union1d(grid, [lo, hi])
    return _abs_pwl_integral(grid, sample_u(slA, grid) - sample_u(slB, grid))


def sobolev_bound(dataA: InitialData, dataB: InitialData, cs: CoefficientSet | None = None,
                  n: int = 40001) -> float:
    """||du0||_H1 + ||du0||_W11 + ||du1||_L1 + ||du1||_L2 on [-L, L]; inf if far fields differ."""
    L = max(dataA.L, dataB.L)
    x = np.linspace(-L, L, n)
    d0 = dataA.u0_at(x) - dataB.u0_at(x)
    if abs(d0[0]) > 1e-12 or abs(d0[-1]) > 1e-12:
        return float("inf")
    d0x = dataA.u0x_at(x) - dataB.u0x_at(x)
    d1 = dataA.u1_at(x) - dataB.u1_at(x)
    t = lambda f: float(np.trapezoid(f, x))
    return (np.sqrt(t(d0 * d0) + t(d0x * d0x)) + t(np.abs(d0)) + t(np.abs(d0x))
            + t(np.abs(d1)) + np.sqrt(t(d1 * d1)))


def slice_masses(sl: TimeSlice, cs: CoefficientSet):
    """Per-segment energy masses placed at the segment midpoints in x."""
    a, c1, c2 = sl.coefficients(cs)[:3]
    cd = c2 - c1
    v = sl.values
    fm = (-c1 / cd) * (1 - v["h"]) * v["p"]
    fp = (c2 / cd) * (1 - v["g"]) * v["q"]
    mass = 0.5 * (fm[1:] + fm[:-1]) * sl.dX + 0.5 * (fp[1:] + fp[:-1]) * sl.mdY
    xm = 0.5 * (v["x"][1:] + v["x"][:-1])
    return xm, mass


def kr_lp(xa, ma, xb, mb) -> float:
    """sup sum f_i (mu_i - nu_i) over |f_i| <= 1, |f_{i+1} - f_i| <= x_{i+1} - x_i (HiGHS LP)."""
    pos = np.concatenate([np.asarray(xa, float), np.asarray(xb, float)])
    w = np.concatenate([np.asarray(ma, float), -np.asarray(mb, float)])
    if pos.size == 0:
        return 0.0
    z, inv = np.unique(pos, return_inverse=True)
    c = np.zeros(len(z))
    np.add.at(c, inv, w)
    n = len(z)
    if n == 1:
        return float(abs(c[0]))
    gaps = np.diff(z)
    D = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    A = sparse.vstack([D, -D]).tocsr()
    b = np.concatenate([gaps, gaps])
    res = linprog(-c, A_ub=A, b_ub=b, bounds=[(-1.0, 1.0)] * n, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(-res.fun)


def kr_dist(slA, slB, cs: CoefficientSet | None = None) -> float:
    """Bounded-Lipschitz distance of the energy measures of two slices.

    Either argument may also be a (positions, masses) pair.
    """
    def masses(s):
        if isinstance(s, TimeSlice):
            return slice_masses(s, cs)
        return np.asarray(s[0], float), np.asarray(s[1], float)

    xa, ma = masses(slA)
    xb, mb = masses(slB)
    return kr_lp(xa, ma, xb, mb)


# -- comparison constants ---------------------------------------------------

def _sample_grid(cs, n=81):
    x_lo, x_hi, u_lo, u_hi = cs.domain
    X, U = np.meshgrid(np.linspace(x_lo, x_hi, n), np.linspace(u_lo, u_hi, n), indexing="ij")
    return derived_at(cs, X, U)


def constant_C1(cs: CoefficientSet, weights: MetricWeights) -> float:
    """l1 <= C1 * length, from |v| <= |U| + (|R||w| + |S||z|)/cd and cd >= 2 gamma1."""
    k = weights.kappa
    b = cs.bounds
    return max(1 / k[2], b.alpha2**2 / (2 * b.gamma1 * k[1]), 1 / (4 * b.gamma1 * k[1]))


def constant_C2(cs: CoefficientSet, weights: MetricWeights, n: int = 81) -> float:
    """KR <= C2 * length with C2 = (1 + M_x + M_u) max(1/k1, 1/k2, 1/k6).

    M_x, M_u are the sampled suprema of the x- and u-partials of the energy
    weights rho- = -c1/cd and rho+ = c2/cd.
    """
    dc = _sample_grid(cs, n)
    cd = dc.c2 - dc.c1
    cdx = dc.dx_c2 - dc.dx_c1
    cdu = dc.du_c2 - dc.du_c1
    rmx = (-dc.dx_c1 * cd + dc.c1 * cdx) / cd**2
    rmu = (-dc.du_c1 * cd + dc.c1 * cdu) / cd**2
    rpx = (dc.dx_c2 * cd - dc.c2 * cdx) / cd**2
    rpu = (dc.du_c2 * cd - dc.c2 * cdu) / cd**2
    Mx = float(max(np.max(np.abs(rmx)), np.max(np.abs(rpx))))
    Mu = float(max(np.max(np.abs(rmu)), np.max(np.abs(rpu))))
    k = weights.kappa
    return (1 + Mx + Mu) * max(1 / k[1], 1 / k[2], 1 / k[6])


def constant_C3(cs: CoefficientSet, dataA: InitialData, dataB: InitialData, weights: MetricWeights,
                T: float, delta: float, n: int = 81) -> float:
    """length(tau = 0) of the linear-RS path <= C3 * sobolev_bound.

    C3 = W[k2 (K1/gamma1) exp(M Lam) (2|Omega| + Q) + 2 k3 K1 + 2 k6 (|R|_2 + |S|_2) K2]
    with W = 1 + Q bounding both potentials, Q = max over the end states of
    int R^2 + S^2, Lam = max int |R - S|, M = sup |d_u (c2 - c1)| / (c2 - c1)^2,
    K1 = alpha2 + c_max + sup|alpha_u| max|u1|_1 + sup|c_u| max|u0x|_1 and
    K2 the same with L2 norms of the data.
    """
    b = cs.bounds
    k = weights.kappa
    dc = _sample_grid(cs, n)
    cd = dc.c2 - dc.c1
    M = float(np.max(np.abs(dc.du_c2 - dc.du_c1) / cd**2))
    c_max = float(max(np.max(np.abs(dc.c1)), np.max(np.abs(dc.c2))))
    au = float(np.max(np.abs(dc.du_alpha)))
    cu = float(max(np.max(np.abs(dc.du_c1)), np.max(np.abs(dc.du_c2))))
    s = s_grid(cs, max(dataA.L, dataB.L), T, delta)
    omega = float(s[-1] - s[0])
    Q = Lam = R2 = S2 = u1_1 = u1_2 = u0x_1 = u0x_2 = 0.0
    for d in (dataA, dataB):
        R, S = riemann_initial(cs, d, s)
        Q = max(Q, float(np.trapezoid(R * R + S * S, s)))
        Lam = max(Lam, float(np.trapezoid(np.abs(R - S), s)))
        R2 = max(R2, float(np.sqrt(np.trapezoid(R * R, s))))
        S2 = max(S2, float(np.sqrt(np.trapezoid(S * S, s))))
        u1, u0x = d.u1_at(s), d.u0x_at(s)
        u1_1 = max(u1_1, float(np.trapezoid(np.abs(u1), s)))
        u1_2 = max(u1_2, float(np.sqrt(np.trapezoid(u1 * u1, s))))
        u0x_1 = max(u0x_1, float(np.trapezoid(np.abs(u0x), s)))
        u0x_2 = max(u0x_2, float(np.sqrt(np.trapezoid(u0x * u0x, s))))
    K1 = b.alpha2 + c_max + au * u1_1 + cu * u0x_1
    K2 = b.alpha2 + c_max + au * u1_2 + cu * u0x_2
    W = 1.0 + Q
    return W * (k[2] * (K1 / b.gamma1) * np.exp(M * Lam) * (2 * omega + Q) + 2 * k[3] * K1
                + 2 * k[6] * (R2 + S2) * K2)


@dataclass
class MetricReport:
    weights: dict
    gauge: str
    grid: dict
    n_theta: int
    taus: list
    lengths: list
    lipschitz_ratio: float | None = None
    comparisons: dict = field(default_factory=dict)
    breakdowns: list = field(default_factory=list)

    def write(self, path, header: dict | None = None):
        doc = asdict(self)
        if header:
            doc.update(header)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class DecayReport:
    n_chars: int
    n_points: int
    n_ok: int
    slack: float
    worst_excess: float

    @property
    def fraction(self) -> float:
        return self.n_ok / max(1, self.n_points)


def _at_X(sl: TimeSlice, arr, X0):
    X, first = np.unique(sl.X, return_index=True)
    return np.interp(X0, X, np.asarray(arr)[first], left=np.nan, right=np.nan)


def potential_decay(state, cs: CoefficientSet, taus, X_samples, slack: float | None = None) -> DecayReport:
    """Discrete W- decay along backward characteristics X = const.

    X samples snap to lattice columns.  Between consecutive slices the
    finite-difference rate of W- is compared with
    -(2 gamma1 / alpha2) <S^2> + <G1> + slack, where <S^2> is the time
    average of S^2 along the characteristic, computed from the
    division-free S^2 dt = alpha (1 - g) q / cd dY on the column, and <G1>
    is the trapezoid average of the two end values.  Default slack is
    5 * grid step.
    """
    b = cs.bounds
    d, N = state.grid.delta, state.N
    slack = 5 * d if slack is None else float(slack)
    taus = np.asarray(taus, dtype=float)
    cols = np.unique(np.clip(np.rint(np.asarray(X_samples, dtype=float) / d).astype(int) + N, 0, 2 * N))
    X0 = (cols - N) * d
    Wm, G1 = [], []
    for tau in taus:
        sl = extract_slice(state, tau)
        Wm.append(_at_X(sl, potentials(sl).Wm, X0))
        G1.append(interaction_integrals(sl, cs)[0])
    Wm, G1 = np.array(Wm), np.array(G1)
    s2_int = np.full((len(taus), len(cols)), np.nan)
    for n, c in enumerate(cols):
        kk = np.arange(min(c, state.rows - 1) + 1)
        col = {f: state.band(f)[kk, c] for f in ("t", "g", "q", "x", "u")}
        a, c1, c2 = _march_py.coefficients(cs, col["x"], col["u"])[:3]
        f = a * (1 - col["g"]) * col["q"] / (c2 - c1)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * d)])
        s2_int[:, n] = np.interp(taus, col["t"], cum, right=np.nan)
    dt = np.diff(taus)[:, None]
    rate = np.diff(Wm, axis=0) / dt
    s2_avg = np.diff(s2_int, axis=0) / dt
    bound = -(2 * b.gamma1 / b.alpha2) * s2_avg + 0.5 * (G1[1:] + G1[:-1])[:, None] + slack
    valid = np.isfinite(rate) & np.isfinite(bound)
    excess = np.where(valid, rate - bound, -np.inf)
    return DecayReport(len(cols), int(valid.sum()), int((excess <= 0)[valid].sum()), slack,
                       float(np.max(excess[valid])) if valid.any() else float("nan"))
