"""Independent reference values.  Nothing here imports the solver stack."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.ndimage import maximum_filter1d

from .expr import evaluate, is_constant

PDE_TOL = 1e-8
MAX_ATOMS = 16


class NonConstantCoefficients(ValueError):
    pass


class TooManyAtoms(ValueError):
    pass


class OracleError(RuntimeError):
    pass


def _constants(cs):
    if not cs.is_constant():
        raise NonConstantCoefficients("closed form needs constant alpha, beta, gamma")
    a, b, g = (float(evaluate(e, 0.0, 0.0)) for e in (cs.alpha, cs.beta, cs.gamma))
    return a, b, g


def speeds(cs):
    """(lambda_minus, lambda_plus) for constant coefficients."""
    a, b, g = _constants(cs)
    r = np.sqrt(b * b + a * a * g * g)
    return (b - r) / (a * a), (b + r) / (a * a)


def _u1_antiderivative(d, y):
    """U1(y) = int_0^y u1 by adaptive quadrature between consecutive sorted points."""
    y = np.asarray(y, dtype=float)
    pts = np.unique(np.concatenate([y.ravel(), [0.0]]))
    inc = np.zeros(len(pts))
    f = lambda s: float(d.u1_at(s))
    L = d.L
    for n in range(1, len(pts)):
        a, b = pts[n - 1], pts[n]
        # u1 vanishes outside [-L, L]
        lo, hi = max(a, -L), min(b, L)
        if hi > lo:
            inc[n] = quad(f, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    cum = np.cumsum(inc)
    cum -= cum[np.searchsorted(pts, 0.0)]
    return np.interp(y, pts, cum).reshape(y.shape)


def dalembert(cs, d, x, t, check: bool = True):
    """u(x, t) = F(x - lam_p t) + G(x - lam_m t) for constant coefficients.

    With U1' = u1: F = (U1 + lam_m u0) / (lam_m - lam_p) and G = u0 - F.
    When ``check`` is set, the PDE residual is verified at a few interior
    points by fourth-order finite differences.
    """
    lm, lp = speeds(cs)
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    yp = x - lp * t
    ym = x - lm * t

    def Fn(y):
        return (_u1_antiderivative(d, y) + lm * d.u0_at(y)) / (lm - lp)

    u = Fn(yp) + d.u0_at(ym) - Fn(ym)
    if check and u.size:
        flat_x, flat_t = x.ravel(), t.ravel()
        idx = np.unique(np.linspace(0, flat_x.size - 1, min(8, flat_x.size)).astype(int))
        for n in idx:
            res = pde_residual_extrapolated(cs, d, flat_x[n], max(flat_t[n], 0.05))
            if res > PDE_TOL:
                raise OracleError(f"closed form fails the PDE check: residual {res:.3e}")
    return u if u.ndim else float(u)


def pde_residual(cs, d, x, t, step=5e-3):
    """|alpha^2 u_tt + 2 beta u_tx - gamma^2 u_xx| by fourth-order central differences."""
    return abs(_signed_residual(cs, d, x, t, step))


def pde_residual_extrapolated(cs, d, x, t, step=1e-3):
    """Residual with the O(step^4) truncation term removed by Richardson extrapolation.

    Steep data make the plain stencil error dominate; the exact closed form
    then still yields a residual at round-off level.
    """
    r1 = _signed_residual(cs, d, x, t, step)
    r2 = _signed_residual(cs, d, x, t, step / 2)
    return abs((16.0 * r2 - r1) / 15.0)


def _signed_residual(cs, d, x, t, step):
    a, b, g = _constants(cs)
    w1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12 * step)
    w2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * step * step)
    o = np.arange(-2, 3) * step
    XX, TT = np.meshgrid(x + o, t + o, indexing="ij")
    U = dalembert(cs, d, XX, TT, check=False)
    u_xx = w2 @ U[:, 2]
    u_tt = U[2, :] @ w2
    u_tx = w1 @ U @ w1
    return float(a * a * u_tt + 2 * b * u_tx - g * g * u_xx)


@dataclass(frozen=True)
class AtomicMeasure:
    positions: tuple
    masses: tuple

    def __post_init__(self):
        if len(self.positions) != len(self.masses):
            raise ValueError("positions and masses differ in length")
        if len(self.positions) > MAX_ATOMS:
            raise TooManyAtoms(f"at most {MAX_ATOMS} atoms")
        if any(m < 0 for m in self.masses) or not all(np.isfinite(self.positions)):
            raise ValueError("masses must be nonnegative and positions finite")


def bl_bruteforce(A: AtomicMeasure, B: AtomicMeasure, resolution: float = 1e-4) -> float:
    """sup of sum f (dA - dB) over |f| <= 1, Lip(f) <= 1, by dynamic programming.

    The values of f at the sorted atom positions range over a grid of step
    ``resolution`` in [-1, 1]; each step takes a sliding-window maximum over
    the admissible previous values.  A polish step snaps the grid optimum to
    the polytope vertex it approximates.  Exactness gap is at most
    resolution * total variation of A - B.
    """
    if len(A.positions) + len(B.positions) > MAX_ATOMS:
        raise TooManyAtoms(f"at most {MAX_ATOMS} atoms in total")
    pos = {}
    for p, m in zip(A.positions, A.masses):
        pos[float(p)] = pos.get(float(p), 0.0) + m
    for p, m in zip(B.positions, B.masses):
        pos[float(p)] = pos.get(float(p), 0.0) - m
    if not pos:
        return 0.0
    z = np.array(sorted(pos))
    w = np.array([pos[v] for v in z])
    n_grid = int(round(2.0 / resolution)) + 1
    v = np.linspace(-1.0, 1.0, n_grid)
    val = w[0] * v
    back = []
    for i in range(1, len(z)):
        r = int(np.floor((z[i] - z[i - 1]) / resolution + 1e-9))
        size = min(2 * r + 1, 2 * n_grid + 1)
        best = maximum_filter1d(val, size=size, mode="nearest")
        # arg-max bookkeeping for the polish step
        back.append((r, val.copy()))
        val = best + w[i] * v
    j = int(np.argmax(val))
    best_val = float(val[j])
    vals = [v[j]]
    for r, prev in reversed(back):
        lo, hi = max(0, j - r), min(n_grid, j + r + 1)
        j = lo + int(np.argmax(prev[lo:hi]))
        vals.append(v[j])
    vals = np.array(vals[::-1])
    return max(best_val, _polish(z, w, vals, resolution))


def _polish(z, w, vals, res):
    """Snap near-active constraints to equality and re-evaluate the objective."""
    n = len(z)
    gaps = np.diff(z)
    f = np.full(n, np.nan)
    tol = 3 * res
    for i in range(n):
        if abs(abs(vals[i]) - 1.0) <= tol:
            f[i] = np.sign(vals[i])
    if np.all(np.isnan(f)):
        return -np.inf
    for _ in range(n):
        for i in range(n - 1):
            tight = abs(abs(vals[i + 1] - vals[i]) - gaps[i]) <= tol
            if not tight:
                continue
            s = np.sign(vals[i + 1] - vals[i])
            if np.isnan(f[i + 1]) and not np.isnan(f[i]):
                f[i + 1] = f[i] + s * gaps[i]
            elif np.isnan(f[i]) and not np.isnan(f[i + 1]):
                f[i] = f[i + 1] - s * gaps[i]
    f = np.where(np.isnan(f), vals, f)
    if np.any(np.abs(f) > 1 + 1e-12) or np.any(np.abs(np.diff(f)) > gaps + 1e-12):
        return -np.inf
    return float(np.dot(f, w))


def convergence_order(errors) -> float:
    """Least-squares slope of log e against log h."""
    h = np.array([float(a) for a, _ in errors])
    e = np.array([float(b) for _, b in errors])
    if len(h) < 2:
        raise ValueError("need at least two (h, e) pairs")
    if np.any(h <= 0) or np.any(e <= 0):
        raise ValueError("step sizes and errors must be positive")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])
