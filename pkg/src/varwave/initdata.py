"""Initial data (u0, u1), Riemann variables and boundary data on the line X + Y = 0."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .coeffx import CoefficientSet, derived_at
from .dual import eval_d2
from .expr import Expr, evaluate, parse_expr, to_text


class InitialDataError(ValueError):
    pass


@dataclass(frozen=True)
class SampledProfile:
    """Tabulated profile. ``kind`` is 'pchip' (u0) or 'linear' (u1)."""

    xs: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if len(self.xs) < 3 or np.any(np.diff(self.xs) <= 0):
            raise InitialDataError("sampled profile needs >= 3 strictly increasing x values")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "pchip":
            out = PchipInterpolator(self.xs, self.values, extrapolate=False)(x)
            out = np.where(x < self.xs[0], self.values[0], out)
            out = np.where(x > self.xs[-1], self.values[-1], out)
            return out
        return np.interp(x, self.xs, self.values, left=0.0, right=0.0)

    def derivative(self, x):
        # centered differences on the sample grid, then linear interpolation
        dv = np.gradient(self.values, self.xs)
        return np.interp(np.asarray(x, dtype=float), self.xs, dv, left=0.0, right=0.0)


Profile = object  # Expr or SampledProfile


@dataclass(frozen=True)
class InitialData:
    u0: Profile
    u1: Profile
    L: float

    @classmethod
    def from_text(cls, u0: str, u1: str, L: float):
        return cls(parse_expr(str(u0)), parse_expr(str(u1)), float(L))

    @classmethod
    def from_samples(cls, xs, u0, u1, L=None):
        xs = np.asarray(xs, dtype=float)
        if L is None:
            L = float(max(abs(xs[0]), abs(xs[-1])))
        return cls(
            SampledProfile(xs, np.asarray(u0, dtype=float), "pchip"),
            SampledProfile(xs, np.asarray(u1, dtype=float), "linear"),
            float(L),
        )

    def u0_at(self, x):
        if isinstance(self.u0, SampledProfile):
            return self.u0(x)
        return _eval_arr(self.u0, x)

    def u0x_at(self, x):
        if isinstance(self.u0, SampledProfile):
            return self.u0.derivative(x)
        x = np.asarray(x, dtype=float)
        return np.asarray(eval_d2(self.u0, x, np.zeros_like(x)).d_x, dtype=float)

    def u1_at(self, x):
        if isinstance(self.u1, SampledProfile):
            return self.u1(x)
        return _eval_arr(self.u1, x)

    def describe(self) -> dict:
        def d(p):
            if isinstance(p, SampledProfile):
                return {"sampled": p.kind, "n": int(len(p.xs))}
            return to_text(p)

        return {"u0": d(self.u0), "u1": d(self.u1), "L": self.L}


def _eval_arr(e: Expr, x):
    x = np.asarray(x, dtype=float)
    return np.asarray(evaluate(e, x, np.zeros_like(x)), dtype=float) + np.zeros_like(x)


def read_samples_csv(path) -> InitialData:
    """Load sampled data from a CSV with header x,u0,u1."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InitialDataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        ix, i0, i1 = header.index("x"), header.index("u0"), header.index("u1")
    except ValueError:
        raise InitialDataError(f"{path}: header must contain x, u0, u1 (got {header})")
    data = []
    for n, r in enumerate(rows[1:], start=2):
        if not r or all(not c.strip() for c in r):
            continue
        try:
            data.append((float(r[ix]), float(r[i0]), float(r[i1])))
        except (ValueError, IndexError):
            raise InitialDataError(f"{path}:{n}: malformed row {r}")
    arr = np.array(data)
    return InitialData.from_samples(arr[:, 0], arr[:, 1], arr[:, 2])


def riemann_initial(cs: CoefficientSet, d: InitialData, x):
    """R0 = alpha u1 + c2 u0x and S0 = alpha u1 + c1 u0x at (x, u0(x))."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u0 = d.u0_at(x)
    dc = derived_at(cs, x, u0)
    u1 = d.u1_at(x)
    u0x = d.u0x_at(x)
    R = dc.alpha * u1 + dc.c2 * u0x
    S = dc.alpha * u1 + dc.c1 * u0x
    if scalar:
        return float(R[0]), float(S[0])
    return R, S


@dataclass
class BoundaryData:
    s: np.ndarray
    u: np.ndarray
    l: np.ndarray
    m: np.ndarray
    h: np.ndarray
    g: np.ndarray
    p: np.ndarray
    q: np.ndarray
    x: np.ndarray
    t: np.ndarray
    R: np.ndarray
    S: np.ndarray

    @property
    def delta(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def n_half(self) -> int:
        return (len(self.s) - 1) // 2


def s_grid(cs: CoefficientSet, L: float, T: float, delta: float) -> np.ndarray:
    """Symmetric uniform grid covering [-L - margin, L + margin], centred on 0."""
    if delta <= 0:
        raise InitialDataError("grid step must be positive")
    margin = 2.0 * T * cs.max_speed() / cs.bounds.alpha1 + 2.0 * delta
    n = int(math.ceil((L + margin) / delta - 1e-9))
    return np.arange(-n, n + 1) * delta


def boundary_from_riemann(s, u, R, S) -> BoundaryData:
    s = np.asarray(s, dtype=float)
    R = np.asarray(R, dtype=float)
    S = np.asarray(S, dtype=float)
    p = 1.0 + R * R
    q = 1.0 + S * S
    h = 1.0 / p
    g = 1.0 / q
    return BoundaryData(
        s=s, u=np.asarray(u, dtype=float).copy(), l=R * h, m=S * g, h=h, g=g, p=p, q=q,
        x=s.copy(), t=np.zeros_like(s), R=R, S=S,
    )


def boundary_gamma0(cs: CoefficientSet, d: InitialData, s) -> BoundaryData:
    s = np.asarray(s, dtype=float)
    ds = np.diff(s)
    if len(s) < 3 or len(s) % 2 == 0 or not np.allclose(ds, ds[0], rtol=1e-12, atol=0):
        raise InitialDataError("s grid must be uniform with an odd number of nodes")
    R, S = riemann_initial(cs, d, s)
    return boundary_from_riemann(s, d.u0_at(s), R, S)


def compatibility_residuals(bd: BoundaryData, cs: CoefficientSet):
    """Residuals of du/ds, dx/ds, dt/ds against the characteristic relations."""
    dc = derived_at(cs, bd.x, bd.u)
    cd = dc.c2 - dc.c1
    ds = bd.delta

    def dds(f):
        return np.gradient(f, ds, edge_order=2)

    r_u = dds(bd.u) - (bd.p * bd.l - bd.q * bd.m) / cd
    r_x = dds(bd.x) - (dc.c2 * bd.p * bd.h - dc.c1 * bd.q * bd.g) / cd
    r_t = dds(bd.t) - dc.alpha * (bd.p * bd.h - bd.q * bd.g) / cd
    return r_u, r_x, r_t


def initial_energy(cs: CoefficientSet, d: InitialData, n: int = 40001, half_width=None) -> float:
    """E0 = integral of alpha^2 u1^2 + gamma^2 u0x^2 on a fine independent grid."""
    w = d.L if half_width is None else half_width
    if isinstance(d.u0, SampledProfile):
        xs = d.u0.xs
    else:
        xs = np.linspace(-w, w, n)
    u0 = d.u0_at(xs)
    dc = derived_at(cs, xs, u0)
    f = dc.alpha**2 * d.u1_at(xs) ** 2 + dc.gamma**2 * d.u0x_at(xs) ** 2
    return float(np.trapezoid(f, xs))
