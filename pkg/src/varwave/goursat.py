"""Goursat solver for the semilinear system in characteristic coordinates (X, Y).

Storage is a band: ``F[f, k, c]`` holds field ``f`` at lattice node
``i = c - N``, ``j = k - i`` where ``k = i + j`` is the anti-diagonal index
(row 0 is the boundary line X + Y = 0).  Row k has valid columns
``c = k .. 2N``; the west neighbour of (k, c) is (k-1, c-1) and the south
neighbour is (k-1, c).  Only the half box i + j >= 0 is ever needed.

The march itself lives in the compiled ``_kernel`` extension; a pure numpy
implementation with identical arithmetic is used when the extension is
missing or ``VARWAVE_PURE=1`` is set.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _march_py
from ._march_py import G, H, L, M, P, Q, T, U, XX
from .coeffx import CoefficientSet
from .expr import compile_tape
from .initdata import BoundaryData

try:  # compiled core, selected at import
    if os.environ.get("VARWAVE_PURE", "") == "1":
        raise ImportError("pure backend forced")
    from . import _kernel
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on the build
    _kernel = None
    BACKEND = "numpy"

FIELDS = ("u", "l", "m", "h", "g", "p", "q", "x", "t")
EPS_CIRCLE = 1e-8
MEMORY_BUDGET = float(os.environ.get("VARWAVE_MEMORY_BUDGET", 3.0e9))  # bytes for one band


class SolverError(RuntimeError):
    """Numerical failure at lattice node (i, j)."""

    def __init__(self, message, i=None, j=None):
        super().__init__(message if i is None else f"{message} at node (i={i}, j={j})")
        self.i, self.j = i, j


class NonpositivePQ(SolverError):
    pass


class NaNDetected(SolverError):
    pass


class ProjectionFailure(SolverError):
    pass


class FixedPointDivergence(SolverError):
    pass


class CoefficientDomainError(SolverError):
    pass


_STATUS_ERRORS = {
    _march_py.NONPOSITIVE_PQ: (NonpositivePQ, "p or q became nonpositive"),
    _march_py.NAN: (NaNDetected, "non-finite value"),
    _march_py.PROJECTION: (ProjectionFailure, "circle projection of a degenerate point"),
    _march_py.DIVERGENCE: (FixedPointDivergence, "corrector iteration diverged"),
    _march_py.DOMAIN: (CoefficientDomainError, "coefficient evaluation failed"),
}


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice (X, Y) = (i delta, j delta) with i, j in [-n_half, n_half].

    ``k_max`` caps the anti-diagonal index; None means the full box.
    """

    delta: float
    n_half: int
    k_max: int | None = None

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError("grid step must be positive")
        if self.n_half < 1:
            raise ValueError("n_half must be >= 1")

    @property
    def width(self) -> int:
        return 2 * self.n_half + 1

    @property
    def i_range(self):
        return (-self.n_half, self.n_half)

    j_range = i_range

    @property
    def row_cap(self) -> int:
        full = 2 * self.n_half
        return full if self.k_max is None else min(int(self.k_max), full)

    @classmethod
    def for_boundary(cls, bd: BoundaryData, k_max=None):
        return cls(bd.delta, bd.n_half, k_max)

    def as_dict(self) -> dict:
        return {"delta": self.delta, "n_half": self.n_half, "k_max": self.k_max}


@dataclass
class StateField:
    """Solved band of the nine unknowns; rows 0 .. rows-1 are valid."""

    F: np.ndarray
    grid: GridSpec
    cs: CoefficientSet
    rows: int
    max_drift: float = 0.0
    backend: str = BACKEND
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._mask = None

    # -- indexing --------------------------------------------------------
    @property
    def N(self) -> int:
        return self.grid.n_half

    def band(self, name: str) -> np.ndarray:
        """(rows, W) view of one field; entries with c < k are NaN."""
        return self.F[FIELDS.index(name), : self.rows]

    @property
    def mask(self) -> np.ndarray:
        if self._mask is None:
            k = np.arange(self.rows)[:, None]
            c = np.arange(self.grid.width)[None, :]
            self._mask = c >= k
        return self._mask

    def XY(self):
        k = np.arange(self.rows)[:, None].astype(float)
        c = np.arange(self.grid.width)[None, :].astype(float)
        d = self.grid.delta
        X = (c - self.N) * d + 0 * k
        Y = (k - c + self.N) * d
        return X, Y

    def index(self, i: int, j: int):
        return i + j, i + self.N

    def solved(self, i: int, j: int) -> bool:
        k, c = self.index(i, j)
        return 0 <= k < self.rows and k <= c < self.grid.width

    def node(self, i: int, j: int) -> dict:
        if not self.solved(i, j):
            raise IndexError(f"node (i={i}, j={j}) not solved")
        k, c = self.index(i, j)
        return {name: float(self.F[n, k, c]) for n, name in enumerate(FIELDS)}

    def to_dense(self, name: str) -> np.ndarray:
        """(2N+1, 2N+1) array indexed [i + N, j + N]; unsolved nodes are NaN."""
        W = self.grid.width
        out = np.full((W, W), np.nan)
        b = self.band(name)
        for k in range(self.rows):
            c = np.arange(k, W)
            out[c, k - c + 2 * self.N] = b[k, c]
        return out

    @property
    def t_complete(self) -> float:
        """Every slice t = tau with tau below this value lies inside the solved band."""
        t = self.band("t")[self.rows - 1, self.rows - 1 :]
        return float(np.min(t))

    def circle_residuals(self):
        ok = self.mask
        l, h, m, g = (self.band(n)[ok] for n in "lhmg")
        return float(np.max(np.abs(l * l + h * h - h))), float(np.max(np.abs(m * m + g * g - g)))


def _tape(e):
    ops, args, consts = compile_tape(e)
    return (np.ascontiguousarray(ops, dtype=np.int32), np.ascontiguousarray(args, dtype=np.int32),
            np.ascontiguousarray(consts, dtype=np.float64))


def _alloc(rows, W):
    need = 9.0 * 8.0 * rows * W
    if need > MEMORY_BUDGET:
        raise MemoryError(
            f"band of {rows} x {W} nodes needs {need / 1e9:.2f} GB (budget {MEMORY_BUDGET / 1e9:.2f} GB); "
            "tighten the declared bounds, shorten T or coarsen the grid")
    return np.full((9, rows, W), np.nan)


def _initial_rows(grid: GridSpec, cs: CoefficientSet, t_stop) -> int:
    if t_stop is None or not math.isfinite(t_stop):
        return grid.row_cap + 1
    # on smooth data t advances by about alpha * delta / (c2 - c1) per row; chunks grow on demand
    b = cs.bounds
    cd_max = 2.0 * math.hypot(b.beta2, b.alpha2 * b.gamma2) / b.alpha1
    est = 1.1 * t_stop * cd_max / b.alpha1 / grid.delta
    return int(min(grid.row_cap + 1, max(16, math.ceil(est) + 8)))


def solve(bd: BoundaryData, cs: CoefficientSet, gs: GridSpec | None = None, *, t_stop=None,
          iters: int = 3, renormalize: bool = True, backend: str | None = None) -> StateField:
    """March anti-diagonals k = 1, 2, ... until the row cap or until min t exceeds t_stop."""
    if gs is None:
        gs = GridSpec.for_boundary(bd)
    N, W = gs.n_half, gs.width
    if len(bd.s) != W or not np.isclose(bd.delta, gs.delta, rtol=1e-12, atol=0):
        raise ValueError("boundary grid does not coincide with the lattice diagonal")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    backend = backend or BACKEND
    if backend == "compiled" and _kernel is None:
        raise RuntimeError("compiled backend unavailable")
    cap = gs.row_cap + 1
    rows_alloc = _initial_rows(gs, cs, t_stop)
    F = _alloc(rows_alloc, W)
    for n, name in enumerate(FIELDS):
        F[n, 0] = getattr(bd, name)
    ts = math.inf if t_stop is None else float(t_stop)
    tapes = (_tape(cs.alpha), _tape(cs.beta), _tape(cs.gamma)) if backend == "compiled" else None
    k0, drift = 1, 0.0
    while True:
        if backend == "compiled":
            done, status, fk, fc, d = _kernel.march(F, k0, rows_alloc, *tapes, gs.delta, iters, renormalize, ts)
        else:
            done, status, fk, fc, d = _march_py.march(F, k0, rows_alloc, cs, gs.delta, iters, renormalize, ts)
        drift = max(drift, d)
        if status != _march_py.OK:
            cls, msg = _STATUS_ERRORS[status]
            i = fc - N if fc >= 0 else None
            raise cls(msg, i, (fk - i) if i is not None else None)
        stopped = done < rows_alloc or (done > 0 and np.nanmin(F[T, done - 1, done - 1 :]) > ts)
        if stopped or rows_alloc >= cap:
            rows = done
            break
        grow = min(cap, rows_alloc + max(16, rows_alloc // 2))
        F2 = _alloc(grow, W)
        F2[:, :rows_alloc] = F
        F, k0, rows_alloc = F2, done, grow
    state = StateField(F=F[:, :rows], grid=gs, cs=cs, rows=rows, max_drift=drift, backend=backend)
    state.meta.update({"iters": iters, "renormalize": renormalize, "t_stop": t_stop})
    return state


def circle_renormalize(l, h, m, g):
    """Project (l, h - 1/2) and (m, g - 1/2) onto the circle of radius 1/2 about (0, 1/2).

    Returns (l, h, m, g, drift_lh, drift_mg) with the pre-projection drift
    |l^2 + h^2 - h|.  Raises ProjectionFailure on the circle centre or when
    h, g leave the sanity window [-0.1, 1.1].
    """
    l, h, m, g = (np.asarray(v, dtype=float) for v in (l, h, m, g))
    if np.any((h < -0.1) | (h > 1.1) | (g < -0.1) | (g > 1.1)):
        raise ProjectionFailure("h or g outside the sanity window [-0.1, 1.1]")
    l2, h2, d1, f1 = _march_py.renormalize(l, h)
    m2, g2, d2, f2 = _march_py.renormalize(m, g)
    if np.any(f1 | f2):
        raise ProjectionFailure("point at the circle centre cannot be projected")
    return l2, h2, m2, g2, d1, d2


def cell_update(state: StateField, i: int, j: int, cs: CoefficientSet | None = None, iters: int = 3,
                renormalize: bool = True) -> dict:
    """Recompute node (i, j) from its solved west (i-1, j) and south (i, j-1) neighbours.

    Returns the nine node values plus the Y-direction residuals
    ``res_u``, ``res_x``, ``res_t`` (trapezoidal u, x, t increments along Y
    compared with the X-advanced values).
    """
    cs = cs or state.cs
    if not (state.solved(i - 1, j) and state.solved(i, j - 1)):
        raise IndexError(f"neighbours of (i={i}, j={j}) are not solved")
    kw, cw = state.index(i - 1, j)
    ks, cs_ = state.index(i, j - 1)
    Wv = state.F[:, kw, cw : cw + 1]
    Sv = state.F[:, ks, cs_ : cs_ + 1]
    with np.errstate(all="ignore"):
        fyS, _ = _march_py._node_rhs(cs, state.F, ks, [cs_])
        _, fxW = _march_py._node_rhs(cs, state.F, kw, [cw])
        vals, status, _, drift, fy, fx = _march_py.update_row(
            cs, Sv, Wv, np.array(fyS), np.array(fxW), state.grid.delta, iters, renormalize)
    if status != _march_py.OK:
        cls, msg = _STATUS_ERRORS[status]
        raise cls(msg, i, j)
    out = {name: float(vals[n, 0]) for n, name in enumerate(FIELDS)}
    # audit: advance u, x, t along Y from the south neighbour instead
    coefS = _march_py.coefficients(cs, Sv[XX], Sv[U])
    coefN = _march_py.coefficients(cs, vals[XX], vals[U])
    yS = _march_py.y_rhs_uxt(coefS, Sv[M], Sv[G], Sv[Q])
    yN = _march_py.y_rhs_uxt(coefN, vals[M], vals[G], vals[Q])
    half = 0.5 * state.grid.delta
    for n, key in ((U, "u"), (XX, "x"), (T, "t")):
        idx = (U, XX, T).index(n)
        out["res_" + key] = float(abs(Sv[n, 0] + half * (yS[idx][0] + yN[idx][0]) - vals[n, 0]))
    out["drift"] = float(drift)
    return out


def coefficient_band(state: StateField):
    """(alpha, c1, c2, a1, a2, b, d1, d2, e) evaluated on the solved band (NaN elsewhere)."""
    ok = state.mask
    x = state.band("x")[ok]
    u = state.band("u")[ok]
    coef = _march_py.coefficients(state.cs, x, u)
    out = []
    for v in coef:
        a = np.full(ok.shape, np.nan)
        a[ok] = v
        out.append(a)
    return tuple(out)


def consistency_residuals(state: StateField, cs: CoefficientSet | None = None) -> dict:
    """Centered-difference audits of the cross-derivative identity and the Y equations of u, x, t.

    Returns (rows, W) arrays ``uXY``, ``u_Y``, ``x_Y``, ``t_Y``; NaN where
    the stencil leaves the solved band.
    """
    if cs is not None and cs is not state.cs:
        state = StateField(state.F, state.grid, cs, state.rows)
    a, c1, c2 = coefficient_band(state)[:3]
    cd = c2 - c1
    B = {n: state.band(n) for n in FIELDS}
    d = state.grid.delta
    K, Wd = B["u"].shape
    phi = B["q"] * B["m"] / cd   # (qm/cd), differentiated in X
    psi = B["p"] * B["l"] / cd   # (pl/cd), differentiated in Y
    out = {k: np.full((K, Wd), np.nan) for k in ("uXY", "u_Y", "x_Y", "t_Y")}
    if K < 3:
        return out
    k = np.arange(1, K - 1)[:, None]
    c = np.arange(1, Wd - 1)[None, :]
    valid = c >= k + 1
    kk, cc = np.broadcast_arrays(k, c)
    kk, cc = kk[valid], cc[valid]
    # X neighbours: (k-1, c-1), (k+1, c+1); Y neighbours: (k-1, c), (k+1, c)
    phi_X = (phi[kk + 1, cc + 1] - phi[kk - 1, cc - 1]) / (2 * d)
    psi_Y = (psi[kk + 1, cc] - psi[kk - 1, cc]) / (2 * d)
    out["uXY"][kk, cc] = np.abs(phi_X - psi_Y)

    def dY(f):
        return (f[kk + 1, cc] - f[kk - 1, cc]) / (2 * d)

    qg = B["q"][kk, cc] * B["g"][kk, cc] / cd[kk, cc]
    out["u_Y"][kk, cc] = np.abs(dY(B["u"]) - phi[kk, cc])
    out["x_Y"][kk, cc] = np.abs(dY(B["x"]) - c1[kk, cc] * qg)
    out["t_Y"][kk, cc] = np.abs(dY(B["t"]) - a[kk, cc] * qg)
    return out


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def export_csv(state: StateField, path, extra_header: dict | None = None):
    """Write nodes as CSV (i, j, X, Y, u, l, m, h, g, p, q, x, t) plus ``<path>.json``."""
    N, d = state.N, state.grid.delta
    kk, cc = np.nonzero(state.mask)
    ii = cc - N
    jj = kk - ii
    cols = [ii, jj, ii * d, jj * d] + [state.F[f, kk, cc] for f in range(len(FIELDS))]
    table = np.column_stack(cols).astype(float)
    fmt = ["%d", "%d"] + ["%.17g"] * (len(cols) - 2)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(("i", "j", "X", "Y") + FIELDS) + "\n")
        np.savetxt(fh, table, fmt=fmt, delimiter=",")
    header = {
        "grid": state.grid.as_dict(),
        "rows": state.rows,
        "coefficients": state.cs.as_dict(),
        "coefficient_hash": config_hash(state.cs.as_dict()),
        "backend": state.backend,
        "max_drift": state.max_drift,
    }
    if extra_header:
        header.update(extra_header)
    with open(str(path) + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def import_csv(path, cs: CoefficientSet | None = None) -> StateField:
    """Inverse of export_csv.  The coefficient set is rebuilt from the header unless given."""
    with open(str(path) + ".json") as fh:
        header = json.load(fh)
    if cs is None:
        c = header["coefficients"]
        cs = CoefficientSet.from_text(c["alpha"], c["beta"], c["gamma"], c["bounds"], c["domain"])
    g = header["grid"]
    grid = GridSpec(g["delta"], g["n_half"], g["k_max"])
    rows = int(header["rows"])
    F = np.full((9, rows, grid.width), np.nan)
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    i, j = table[:, 0].astype(int), table[:, 1].astype(int)
    F[:, i + j, i + grid.n_half] = table[:, 4:].T
    return StateField(F=F, grid=grid, cs=cs, rows=rows, max_drift=header.get("max_drift", 0.0),
                      backend=header.get("backend", BACKEND))


def synthetic_state(grid: GridSpec, cs: CoefficientSet, rows: int | None = None, **fns) -> StateField:
    """Band filled from callables f(X, Y); unspecified fields take the zero-solution values."""
    rows = grid.row_cap + 1 if rows is None else rows
    st = StateField(F=np.full((9, rows, grid.width), np.nan), grid=grid, cs=cs, rows=rows, backend="synthetic")
    X, Y = st.XY()
    base = {"u": 0 * X, "l": 0 * X, "m": 0 * X, "h": 1 + 0 * X, "g": 1 + 0 * X, "p": 1 + 0 * X,
            "q": 1 + 0 * X, "x": (X - Y) / 2, "t": (X + Y) / 2}
    for n, name in enumerate(FIELDS):
        v = fns[name](X, Y) if name in fns else base[name]
        st.F[n] = np.where(st.mask, v, np.nan)
    return st
