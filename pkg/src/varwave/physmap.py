"""Constant-time slices t = tau of a solved band and the physical quantities on them."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _march_py
from .coeffx import CoefficientSet
from .goursat import FIELDS, StateField

EPS_SING = 1e-3
R_MAX = 1e6


class SliceOutOfDomain(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass
class TimeSlice:
    """Samples of the level curve t = tau, ordered by X increasing (Y decreasing).

    ``edges`` holds (k0, c0, k1, c1, w) per sample so any other band array
    can be interpolated to the same points with :meth:`interp`.
    """

    tau: float
    X: np.ndarray
    Y: np.ndarray
    values: dict
    edges: tuple
    delta: float
    eps_sing: float = EPS_SING
    meta: dict = field(default_factory=dict)

    def __getattr__(self, name):
        vals = self.__dict__.get("values")
        if vals is not None and name in vals:
            return vals[name]
        raise AttributeError(name)

    def __len__(self):
        return len(self.X)

    def interp(self, band: np.ndarray) -> np.ndarray:
        k0, c0, k1, c1, w = self.edges
        return (1.0 - w) * band[k0, c0] + w * band[k1, c1]

    @property
    def dX(self):
        return np.diff(self.X)

    @property
    def mdY(self):
        return -np.diff(self.Y)

    @property
    def singular(self) -> np.ndarray:
        return (self.values["h"] < self.eps_sing) | (self.values["g"] < self.eps_sing)

    @property
    def R2(self):
        h = self.values["h"]
        return np.where(h > self.eps_sing, (1.0 - h) / np.where(h > 0, h, 1.0), np.nan)

    @property
    def S2(self):
        g = self.values["g"]
        return np.where(g > self.eps_sing, (1.0 - g) / np.where(g > 0, g, 1.0), np.nan)

    @property
    def R(self):
        h = self.values["h"]
        return np.where(h > self.eps_sing, self.values["l"] / np.where(h > 0, h, 1.0), np.nan)

    @property
    def S(self):
        g = self.values["g"]
        return np.where(g > self.eps_sing, self.values["m"] / np.where(g > 0, g, 1.0), np.nan)

    def r2_dx(self):
        """Per-segment R^2 dx = (1-h) p dX (trapezoid)."""
        f = (1.0 - self.values["h"]) * self.values["p"]
        return 0.5 * (f[1:] + f[:-1]) * self.dX

    def s2_dx(self):
        """Per-segment S^2 dx = (1-g) q (-dY) (trapezoid)."""
        f = (1.0 - self.values["g"]) * self.values["q"]
        return 0.5 * (f[1:] + f[:-1]) * self.mdY

    def coefficients(self, cs: CoefficientSet):
        """(alpha, c1, c2, a1, a2, b, d1, d2, e) at the sample points."""
        return _march_py.coefficients(cs, self.values["x"], self.values["u"])


def extract_slice(state: StateField, tau: float, eps_sing: float = EPS_SING) -> TimeSlice:
    """Level curve t = tau by linear interpolation on lattice edges.

    Crossings are collected on both X-edges (fixed j) and Y-edges (fixed i);
    t is nondecreasing along each, so every edge with t0 <= tau < t1 holds
    exactly one crossing.
    """
    tau = float(tau)
    if state.rows < 2:
        raise SliceOutOfDomain("state has no solved rows beyond the boundary")
    if tau < 0 or tau >= state.t_complete:
        raise SliceOutOfDomain(f"tau={tau} outside [0, {state.t_complete}) covered by the solved band")
    t = state.band("t")
    K, W = t.shape
    k = np.arange(K - 1)[:, None]
    c = np.arange(W)[None, :]
    parts = []
    # Y-edges: (k, c) -> (k + 1, c), valid when c >= k + 1
    for dk, dc in ((1, 0), (1, 1)):
        c_hi = W - dc
        kk, cc = np.broadcast_arrays(k, c[:, :c_hi])
        ok = cc >= kk + (1 if dc == 0 else 0)
        kk, cc = kk[ok], cc[ok]
        t0 = t[kk, cc]
        t1 = t[kk + dk, cc + dc]
        hit = (t0 <= tau) & (tau < t1)
        kk, cc, t0, t1 = kk[hit], cc[hit], t0[hit], t1[hit]
        w = (tau - t0) / (t1 - t0)
        parts.append((kk, cc, kk + dk, cc + dc, w))
    k0, c0, k1, c1, w = (np.concatenate([p[n] for p in parts]) for n in range(5))
    # crossings sitting on a node (w == 0) are shared by two edges; keep one
    node = w == 0
    key = np.where(node, k0 * W + c0, -1 - np.arange(len(w)))
    _, first = np.unique(key, return_index=True)
    k0, c0, k1, c1, w = k0[first], c0[first], k1[first], c1[first], w[first]
    d = state.grid.delta
    N = state.N
    X = ((c0 - N) + w * (c1 - c0)) * d
    Y = ((k0 - c0 + N) + w * ((k1 - c1) - (k0 - c0))) * d
    order = np.lexsort((-Y, X))
    k0, c0, k1, c1, w, X, Y = (a[order] for a in (k0, c0, k1, c1, w, X, Y))
    if len(X) < 2:
        raise SliceOutOfDomain(f"slice at tau={tau} has fewer than two samples")
    values = {}
    for n, name in enumerate(FIELDS):
        b = state.band(name)
        values[name] = (1.0 - w) * b[k0, c0] + w * b[k1, c1]
    return TimeSlice(tau=tau, X=X, Y=Y, values=values, edges=(k0, c0, k1, c1, w), delta=d,
                     eps_sing=eps_sing)


@dataclass
class EnergyReport:
    tau: float
    E_minus: float
    E_plus: float
    E0: float | None = None

    @property
    def total(self) -> float:
        return self.E_minus + self.E_plus

    @property
    def drift(self):
        if not self.E0:
            return None
        return (self.total - self.E0) / self.E0

    def as_dict(self) -> dict:
        return {"tau": self.tau, "E_minus": self.E_minus, "E_plus": self.E_plus, "total": self.total,
                "E0": self.E0, "drift": self.drift}


def energy(sl: TimeSlice, cs: CoefficientSet, E0: float | None = None) -> EnergyReport:
    """E_minus = int (-c1/cd)(1-h) p dX and E_plus = int (c2/cd)(1-g) q (-dY) by trapezoid."""
    coef = sl.coefficients(cs)
    c1, c2 = coef[1], coef[2]
    cd = c2 - c1
    v = sl.values
    fm = (-c1 / cd) * (1.0 - v["h"]) * v["p"]
    fp = (c2 / cd) * (1.0 - v["g"]) * v["q"]
    em = float(np.sum(0.5 * (fm[1:] + fm[:-1]) * sl.dX))
    ep = float(np.sum(0.5 * (fp[1:] + fp[:-1]) * sl.mdY))
    return EnergyReport(sl.tau, em, ep, E0)


def _collapse_ties(x, u):
    """Merge samples with equal x (singular segments) into their common mean u."""
    keep = np.ones(len(x), dtype=bool)
    keep[1:] = np.diff(x) > 0
    if keep.all():
        return x, u
    grp = np.cumsum(keep) - 1
    cnt = np.bincount(grp)
    return x[keep], np.bincount(grp, weights=u) / cnt


def sample_u(sl: TimeSlice, xs) -> np.ndarray:
    """u at sorted physical points xs by linear interpolation in x along the slice."""
    xs = np.asarray(xs, dtype=float)
    x = sl.values["x"]
    if xs.size and (xs.min() < x[0] or xs.max() > x[-1]):
        raise OutOfRange(f"query outside slice range [{x[0]}, {x[-1]}]")
    # x is nondecreasing up to round-off; enforce it before merging ties
    xm = np.maximum.accumulate(x)
    xc, uc = _collapse_ties(xm, sl.values["u"])
    return np.interp(xs, xc, uc)


def export_slice_csv(sl: TimeSlice, path, r_max: float = R_MAX):
    cap = r_max * r_max
    R2 = np.nan_to_num(np.minimum(sl.R2, cap), nan=cap)
    S2 = np.nan_to_num(np.minimum(sl.S2, cap), nan=cap)
    sing = sl.singular
    v = sl.values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("X", "Y", "x", "u", "h", "g", "p", "q", "R2_flagged", "S2_flagged", "singular_flag"))
        for n in range(len(sl)):
            row = [sl.X[n], sl.Y[n], v["x"][n], v["u"][n], v["h"][n], v["g"][n], v["p"][n], v["q"][n],
                   R2[n], S2[n]]
            w.writerow([f"{a:.17g}" for a in row] + [int(sing[n])])
