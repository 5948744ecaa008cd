"""Paths of solutions in theta and their first-order perturbation fields.

A linear-RS path blends the Riemann data of two end states,
R^theta = (1 - theta) R_A + theta R_B (likewise S), and recovers u0^theta
from u_x = (R - S) / (c2 - c1) integrated from the left edge of the grid,
where the path is anchored at the blend of the two far-field values.
"""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import _march_py
from .coeffx import CoefficientError, CoefficientSet
from .expr import ExprDomainError
from .goursat import FIELDS, GridSpec, StateField, config_hash, solve
from .initdata import BoundaryData, InitialData, boundary_from_riemann, riemann_initial, s_grid
from .physmap import TimeSlice


STENCIL = 5  # theta-derivative stencil width on the node grid
FD_EPS = 1e-4  # theta sub-step when boundary data exist off the nodes


class PathConstructionError(RuntimeError):
    def __init__(self, message, theta=None):
        super().__init__(message if theta is None else f"{message} (theta={theta})")
        self.theta = theta


def _cd(cs, x, u):
    coef = _march_py.coefficients(cs, x, u)
    return coef[2] - coef[1], coef


@dataclass
class PathOfSolutions:
    """theta grid, boundary data per node and lazily solved states on one lattice."""

    cs: CoefficientSet
    thetas: np.ndarray
    boundaries: list
    grid: GridSpec
    t_stop: float | None
    tag: str
    anchors: dict = field(default_factory=dict)
    iters: int = 3
    cache_size: int = STENCIL + 1
    boundary_fn: object = None
    fd_eps: float = FD_EPS
    fd_method: str | None = None
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _sub: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __len__(self):
        return len(self.thetas)

    @property
    def n_intervals(self) -> int:
        return len(self.thetas) - 1

    def state(self, n: int) -> StateField:
        if n in self._cache:
            self._cache.move_to_end(n)
            return self._cache[n]
        st = solve(self.boundaries[n], self.cs, self.grid, t_stop=self.t_stop, iters=self.iters)
        self._cache[n] = st
        while len(self._cache) > max(1, self.cache_size):
            self._cache.popitem(last=False)
        return st

    def state_at(self, theta: float) -> StateField:
        """Solved state at an arbitrary theta (needs ``boundary_fn``); node thetas hit the node cache."""
        hit = np.nonzero(self.thetas == theta)[0]
        if hit.size:
            return self.state(int(hit[0]))
        if self.boundary_fn is None:
            raise PathConstructionError("path has no boundary data between its nodes", theta)
        key = float(theta)
        if key in self._sub:
            return self._sub[key]
        st = solve(self.boundary_fn(key), self.cs, self.grid, t_stop=self.t_stop, iters=self.iters)
        self._sub[key] = st
        while len(self._sub) > 2:
            self._sub.popitem(last=False)
        return st

    def initial_data(self, n: int):
        """(s, u0, u1) of node n on the boundary grid."""
        bd = self.boundaries[n]
        cd, coef = _cd(self.cs, bd.s, bd.u)
        u1 = (coef[2] * bd.S - coef[1] * bd.R) / (coef[0] * cd)
        return bd.s, bd.u, u1

    def manifest(self) -> dict:
        hashes = []
        for bd in self.boundaries:
            h = config_hash({"u": np.round(bd.u, 15).tolist(), "R": np.round(bd.R, 15).tolist(),
                             "S": np.round(bd.S, 15).tolist()})
            hashes.append(h)
        return {
            "tag": self.tag,
            "thetas": [float(t) for t in self.thetas],
            "anchors": self.anchors,
            "grid": self.grid.as_dict(),
            "t_stop": self.t_stop,
            "coefficients": self.cs.as_dict(),
            "node_hashes": hashes,
        }

    def write_manifest(self, path):
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


PICARD_TOL = 1e-14
PICARD_MAX = 500


def recover_u(cs, s, uA, uB, RA, SA, RB, SB, theta):
    """u0^theta from the blended Riemann data, anchored at the left edge.

    With u_lin = (1 - theta) u_A + theta u_B and u = u_lin + e,
    e_x = (R - S)/cd(x, u_lin + e) - [(1 - theta)(R_A - S_A)/cd(x, u_A) + theta (R_B - S_B)/cd(x, u_B)],
    e = 0 at the left edge.  The bracket equals u_lin' for exact end data, so
    e vanishes identically at theta = 0, 1 and for constant coefficients.
    The trapezoid discretisation is solved by Picard sweeps over the whole
    grid; for this Volterra form the sweeps converge factorially.
    """
    R = (1 - theta) * RA + theta * RB
    S = (1 - theta) * SA + theta * SB
    ulin = (1 - theta) * uA + theta * uB
    if theta in (0.0, 1.0):
        return ulin.copy(), R, S
    try:
        cdA, _ = _cd(cs, s, uA)
        cdB, _ = _cd(cs, s, uB)
        ref = (1 - theta) * (RA - SA) / cdA + theta * (RB - SB) / cdB
        half_ds = 0.5 * np.diff(s)
        e = np.zeros_like(s)
        for _ in range(PICARD_MAX):
            cd, _ = _cd(cs, s, ulin + e)
            f = (R - S) / cd - ref
            new = np.concatenate([[0.0], np.cumsum(half_ds * (f[1:] + f[:-1]))])
            change = float(np.max(np.abs(new - e)))
            e = new
            if not np.isfinite(change):
                raise PathConstructionError("u recovery produced non-finite values", theta)
            if change <= PICARD_TOL * (1.0 + float(np.max(np.abs(ulin)))):
                break
        else:
            raise PathConstructionError("u recovery sweeps did not converge", theta)
    except (ExprDomainError, CoefficientError, FloatingPointError) as exc:
        raise PathConstructionError(f"u recovery failed: {exc}", theta)
    return ulin + e, R, S


def linear_rs_path(cs: CoefficientSet, dataA: InitialData, dataB: InitialData, n_theta: int = 8, *,
                   delta: float, T: float, t_stop: float | None = None, iters: int = 3,
                   cache_size: int = 6, box: float | None = None) -> PathOfSolutions:
    """Blend the Riemann data of two end states on one s grid.

    ``box`` is the half-width of the region of interest; without it both data
    sets must share the support radius L.
    """
    if n_theta < 2:
        raise ValueError("n_theta must be >= 2")
    if box is None:
        if abs(dataA.L - dataB.L) > 0:
            raise ValueError("both data sets must share the support radius L (or pass box)")
        box = dataA.L
    elif box < max(dataA.L, dataB.L):
        raise ValueError("box must cover the support of both data sets")
    s = s_grid(cs, box, T, delta)
    RA, SA = riemann_initial(cs, dataA, s)
    RB, SB = riemann_initial(cs, dataB, s)
    uA, uB = dataA.u0_at(s), dataB.u0_at(s)
    thetas = np.linspace(0.0, 1.0, n_theta + 1)

    def boundary_at(theta):
        u, R, S = recover_u(cs, s, uA, uB, RA, SA, RB, SB, float(theta))
        return boundary_from_riemann(s, u, R, S)

    bds = [boundary_at(th) for th in thetas]
    grid = GridSpec(float(s[1] - s[0]), (len(s) - 1) // 2)
    anchors = {"x_anchor": float(s[0]), "uA_left": float(uA[0]), "uB_left": float(uB[0]),
               "gauge": "u^theta(x_left) = (1-theta) uA(x_left) + theta uB(x_left)"}
    return PathOfSolutions(cs, thetas, bds, grid, T if t_stop is None else t_stop, "linear-RS", anchors,
                           iters=iters, cache_size=cache_size, boundary_fn=boundary_at)


def path_from_boundaries(cs, thetas, boundaries, grid, t_stop, iters=3, cache_size=6) -> PathOfSolutions:
    thetas = np.asarray(thetas, dtype=float)
    if len(thetas) != len(boundaries) or len(thetas) < 2 or np.any(np.diff(thetas) <= 0):
        raise ValueError("need increasing thetas, one boundary per theta")
    return PathOfSolutions(cs, thetas, list(boundaries), grid, t_stop, "user-supplied", {}, iters=iters,
                           cache_size=cache_size)


@dataclass
class PerturbationField:
    """(U, L, M, H, G, P, Q, Xc, Tc) on the band, one array per field, shape (rows, W)."""

    F: np.ndarray
    grid: GridSpec
    rows: int
    theta: float
    dtheta: float
    scheme: str

    NAMES = ("U", "L", "M", "H", "G", "P", "Q", "Xc", "Tc")

    def band(self, name: str) -> np.ndarray:
        return self.F[self.NAMES.index(name), : self.rows]

    def scaled(self, lam: float) -> "PerturbationField":
        return PerturbationField(self.F * lam, self.grid, self.rows, self.theta, self.dtheta, self.scheme)

    def on_slice(self, sl: TimeSlice) -> dict:
        return {n: sl.interp(self.band(n)) for n in self.NAMES}

    def circle_identity_residuals(self, state: StateField):
        """max |2 l L + 2 h H - H| and max |2 m M + 2 g G - G| over the common rows."""
        r = self.rows
        ok = state.mask[:r]
        l, h, m, g = (state.band(n)[:r] for n in "lhmg")
        L, H, M, G = (self.band(n) for n in ("L", "H", "M", "G"))
        a = np.abs(2 * l * L + 2 * h * H - H)[ok]
        b = np.abs(2 * m * M + 2 * g * G - G)[ok]
        return float(np.nanmax(a)), float(np.nanmax(b))


def trimmed(state: StateField, rows: int) -> StateField:
    if rows >= state.rows:
        return state
    return StateField(state.F[:, :rows], state.grid, state.cs, rows, state.max_drift, state.backend, state.meta)


def _derivative_weights(nodes, x0):
    """Weights w with sum w_a f(nodes_a) = p'(x0) for the interpolating polynomial p."""
    x = np.asarray(nodes, dtype=float)
    n = len(x)
    w = np.zeros(n)
    for a in range(n):
        tot = 0.0
        for b in range(n):
            if b == a:
                continue
            term = 1.0 / (x[a] - x[b])
            for c in range(n):
                if c != a and c != b:
                    term *= (x0 - x[c]) / (x[a] - x[c])
            tot += term
        w[a] = tot
    return w


def _combine(states, w):
    rows = min(st.rows for st in states)
    F = np.zeros_like(states[0].F[:, :rows])
    for wj, st in zip(w, states):
        if wj != 0.0:
            F += wj * st.F[:, :rows]
    return F, rows


def fd_perturbation(path: PathOfSolutions, k: int, stencil: int = STENCIL, method: str | None = None
                    ) -> PerturbationField:
    """theta-derivative of the solved states at node k.

    ``substep`` (default when the path can build boundary data at any theta)
    differences states at theta_k +- eps: centered in the interior, three-point
    one-sided at theta = 0 and 1.  ``nodes`` uses a Lagrange-derivative
    stencil of ``stencil`` path nodes, centred where it fits and sliding
    inwards at the ends.
    """
    n = len(path.thetas) - 1
    if not 0 <= k <= n:
        raise IndexError(f"node index {k} outside 0..{n}")
    th = np.asarray(path.thetas, dtype=float)
    method = method or path.fd_method
    if method is None:
        method = "substep" if path.boundary_fn is not None else "nodes"
    if method == "substep":
        e = path.fd_eps
        if 0 < k < n:
            offs, w, scheme = (-e, e), np.array([-1.0, 1.0]) / (2 * e), "centered-substep"
        else:
            sgn = 1.0 if k == 0 else -1.0
            offs = (0.0, sgn * e, 2 * sgn * e)
            w, scheme = sgn * np.array([-3.0, 4.0, -1.0]) / (2 * e), "one-sided-substep"
        F, rows = _combine([path.state_at(th[k] + o) if o else path.state(k) for o in offs], w)
        return PerturbationField(F, path.grid, rows, float(th[k]), e, scheme)
    if method != "nodes":
        raise ValueError(f"unknown method {method!r}")
    m = min(stencil, n + 1)
    lo = min(max(0, k - m // 2), n + 1 - m)
    nodes = list(range(lo, lo + m))
    scheme = f"{'centered' if nodes[m // 2] == k and m % 2 else 'one-sided'}-{m}"
    w = _derivative_weights(th[nodes], th[k])
    F, rows = _combine([path.state(j) for j in nodes], w)
    return PerturbationField(F, path.grid, rows, float(th[k]), float(th[nodes[-1]] - th[nodes[0]]), scheme)


@dataclass
class PhysicalTangent:
    w: np.ndarray
    z: np.ndarray
    U: np.ndarray
    rhat: np.ndarray
    shat: np.ndarray
    singular: np.ndarray
    pert: dict


def physical_tangent(sl: TimeSlice, pert: PerturbationField, cs: CoefficientSet) -> PhysicalTangent:
    """w, z, U, r-hat, s-hat at the slice samples (r-hat, s-hat NaN on singular samples)."""
    v = sl.values
    P = pert.on_slice(sl)
    a, c1, c2, a1, a2, b, d1, d2, e = sl.coefficients(cs)
    Tc, Xc = P["Tc"], P["Xc"]
    w = Xc - c1 / a * Tc
    z = Xc - c2 / a * Tc
    h, g, l, m = v["h"], v["g"], v["l"], v["m"]
    sing = sl.singular
    hs = np.where(sing, 1.0, h)
    gs = np.where(sing, 1.0, g)
    rhat = ((2 * h - 1) * P["L"] - 2 * l * P["H"] - Tc * (a1 - a1 * h - d1 * l) / a) / hs
    shat = ((2 * g - 1) * P["M"] - 2 * m * P["G"] - Tc * (-a2 + a2 * g - d2 * m) / a) / gs
    rhat = np.where(sing, np.nan, rhat)
    shat = np.where(sing, np.nan, shat)
    return PhysicalTangent(w=w, z=z, U=P["U"], rhat=rhat, shat=shat, singular=sing, pert=P)
