"""Zero sets of h and g, their images in (x, t), and classification of singular points.

On solutions the pair (l, h) lies on the circle l^2 + h^2 = h, so h >= 0
only touches zero while l changes sign.  The set {h = 0} is therefore
traced as the contour {l = 0} restricted to the half disc h < 1/2, and the
interpolated (l, h) is projected back to the circle before h is reported.
Fields that do not satisfy the circle identity (synthetic inputs) are
contoured directly at level +eps_level.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from skimage.measure import find_contours

from .coeffx import CoefficientSet, derived_at
from .goursat import EPS_CIRCLE, StateField

PAIR = {"h": "l", "g": "m"}
CIRCLE_CHECK = 1e-6


@dataclass
class SingularCurve:
    family: str  # "backward" (h = 0) or "forward" (g = 0)
    X: np.ndarray
    Y: np.ndarray
    x: np.ndarray
    t: np.ndarray
    kc: np.ndarray  # fractional band coordinates (k, c) per vertex
    field_value: np.ndarray  # h (or g) at each vertex after circle projection

    def as_dict(self) -> dict:
        return {"family": self.family, "n": int(len(self.X)),
                "X": self.X.tolist(), "Y": self.Y.tolist(), "x": self.x.tolist(), "t": self.t.tolist()}


@dataclass
class SingularPoint:
    X: float
    Y: float
    x: float
    t: float
    type: str  # "i", "ii", "iii"
    family: str
    witness: dict = field(default_factory=dict)


# -- band finite differences -------------------------------------------------

def _shift(a, dk, dc):
    """b[k, c] = a[k + dk, c + dc] with NaN outside."""
    out = np.full_like(a, np.nan)
    K, W = a.shape
    ks = slice(max(0, -dk), min(K, K - dk))
    cs = slice(max(0, -dc), min(W, W - dc))
    kt = slice(max(0, dk), min(K, K + dk))
    ct = slice(max(0, dc), min(W, W + dc))
    out[ks, cs] = a[kt, ct]
    return out


def d_X(a, delta):
    return (_shift(a, 1, 1) - _shift(a, -1, -1)) / (2 * delta)


def d_XX(a, delta):
    return (_shift(a, 1, 1) - 2 * a + _shift(a, -1, -1)) / delta**2


def d_Y(a, delta):
    return (_shift(a, 1, 0) - _shift(a, -1, 0)) / (2 * delta)


def d_YY(a, delta):
    return (_shift(a, 1, 0) - 2 * a + _shift(a, -1, 0)) / delta**2


def _sign_changes(v):
    """(segment index, fraction) of every sign change of v, counting exact zeros once."""
    out = []
    nz = np.nonzero(np.isfinite(v) & (v != 0))[0]
    for a, b in zip(nz[:-1], nz[1:]):
        if np.sign(v[a]) == np.sign(v[b]):
            continue
        if b == a + 1:
            out.append((a, v[a] / (v[a] - v[b])))
        else:
            z = (a + b) // 2  # zero run between a and b: report its middle vertex
            out.append((min(z, len(v) - 2), 0.0 if z < len(v) - 1 else 1.0))
    return out


def _bilinear(a, kc):
    """Interpolate band array a at fractional (k, c) coordinates (NaN-aware corners ignored)."""
    k, c = kc[:, 0], kc[:, 1]
    K, W = a.shape
    k0 = np.clip(np.floor(k).astype(int), 0, K - 2)
    c0 = np.clip(np.floor(c).astype(int), 0, W - 2)
    fk, fc = k - k0, c - c0
    v00, v10, v01, v11 = a[k0, c0], a[k0 + 1, c0], a[k0, c0 + 1], a[k0 + 1, c0 + 1]
    w = np.stack([(1 - fk) * (1 - fc), fk * (1 - fc), (1 - fk) * fc, fk * fc])
    v = np.stack([v00, v10, v01, v11])
    ok = np.isfinite(v)
    w = np.where(ok, w, 0.0)
    return np.sum(np.where(ok, v, 0.0) * w, axis=0) / np.maximum(np.sum(w, axis=0), 1e-300)


def _on_circle(state: StateField) -> bool:
    ok = state.mask
    l, h = state.band("l")[ok], state.band("h")[ok]
    return float(np.max(np.abs(l * l + h * h - h), initial=0.0)) <= CIRCLE_CHECK


def zero_curves(state: StateField, field_name: str = "h", eps_level: float = EPS_CIRCLE) -> list:
    """Polylines of {h = 0} (or {g = 0}) in (X, Y), mapped through (x, t)."""
    if field_name not in PAIR:
        raise ValueError("field must be 'h' or 'g'")
    f = state.band(field_name)
    partner = state.band(PAIR[field_name])
    mask = state.mask.copy()
    if _on_circle(state):
        src, level = partner, 0.0
        mask &= f < 0.5
    else:
        src, level = f, eps_level
    arr = np.where(mask, src, 0.0)
    if not np.any(mask):
        return []
    contours = find_contours(arr, level, mask=mask)
    N, d = state.N, state.grid.delta
    x_b, t_b = state.band("x"), state.band("t")
    curves = []
    for kc in contours:
        if len(kc) < 2:
            continue
        k, c = kc[:, 0], kc[:, 1]
        X = (c - N) * d
        Y = (k - c + N) * d
        if X[-1] < X[0] or (X[-1] == X[0] and Y[-1] > Y[0]):
            kc, X, Y = kc[::-1], X[::-1], Y[::-1]
        fv = _bilinear(f, kc)
        pv = _bilinear(partner, kc)
        if src is partner:
            # project the interpolated point onto the circle about (0, 1/2)
            r = np.hypot(pv, fv - 0.5)
            fv = 0.5 + (fv - 0.5) * 0.5 / np.where(r > 0, r, 1.0)
        curves.append(SingularCurve(
            family="backward" if field_name == "h" else "forward",
            X=X, Y=Y, x=_bilinear(x_b, kc), t=_bilinear(t_b, kc), kc=kc, field_value=fv,
        ))
    curves.sort(key=lambda cv: (float(np.min(cv.t)), float(cv.x[np.argmin(cv.t)])))
    return curves


def _segment_intersections(A, B):
    """Intersections of polylines A and B (arrays of (X, Y)); returns list of (point, sa, sb)."""
    out = []
    a0, a1 = A[:-1], A[1:]
    b0, b1 = B[:-1], B[1:]
    # bounding-box sweep
    amin, amax = np.minimum(a0, a1), np.maximum(a0, a1)
    bmin, bmax = np.minimum(b0, b1), np.maximum(b0, b1)
    order = np.argsort(bmin[:, 0])
    bmin_s = bmin[order, 0]
    for i in range(len(a0)):
        hi = np.searchsorted(bmin_s, amax[i, 0], side="right")
        cand = order[:hi]
        cand = cand[(bmax[cand, 0] >= amin[i, 0]) & (bmax[cand, 1] >= amin[i, 1]) & (bmin[cand, 1] <= amax[i, 1])]
        if cand.size == 0:
            continue
        r = a1[i] - a0[i]
        s = b1[cand] - b0[cand]
        den = r[0] * s[:, 1] - r[1] * s[:, 0]
        qp = b0[cand] - a0[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / den
            tb = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / den
        hit = (den != 0) & (ta >= 0) & (ta <= 1) & (tb >= 0) & (tb <= 1)
        for j in np.nonzero(hit)[0]:
            out.append((a0[i] + ta[j] * r, i + ta[j], cand[j] + tb[j]))
    return out


def _witness_fields(state: StateField):
    d = state.grid.delta
    l, m = state.band("l"), state.band("m")
    return {
        "l_X": d_X(l, d), "l_XX": d_XX(l, d), "l_Y": d_Y(l, d),
        "m_Y": d_Y(m, d), "m_YY": d_YY(m, d), "m_X": d_X(m, d),
        "h": state.band("h"), "g": state.band("g"),
    }


def _kc_from_XY(state, X, Y):
    d, N = state.grid.delta, state.N
    i, j = X / d, Y / d
    return np.stack([i + j, i + N], axis=-1)


def classify(state: StateField, cs: CoefficientSet | None, curves, tol=None, tol_c=None) -> list:
    """Type (i) vertices, type (ii) points at sign changes of l_X (m_Y), type (iii) crossings.

    ``tol`` (default 10 eps_circle) decides h = 0 and g = 0; ``tol_c``
    (default delta) decides non-vanishing of derivatives.
    """
    cs = cs or state.cs
    tol = 10 * EPS_CIRCLE if tol is None else tol
    tol_c = state.grid.delta if tol_c is None else tol_c
    wf = _witness_fields(state)
    pts = []
    for cv in curves:
        back = cv.family == "backward"
        dname, d2name, crossname = ("l_X", "l_XX", "l_Y") if back else ("m_Y", "m_YY", "m_X")
        other = "g" if back else "h"
        dv = _bilinear(wf[dname], cv.kc)
        d2v = _bilinear(wf[d2name], cv.kc)
        ov = _bilinear(wf[other], cv.kc)
        for n in range(len(cv.X)):
            if abs(cv.field_value[n]) <= tol and abs(dv[n]) > tol_c and abs(ov[n]) > tol_c:
                pts.append(SingularPoint(float(cv.X[n]), float(cv.Y[n]), float(cv.x[n]), float(cv.t[n]), "i",
                                         cv.family, {dname: float(dv[n]), other: float(ov[n])}))
        # sign changes of the along-family derivative locate curve endpoints
        for n, w in _sign_changes(dv):
            kc = cv.kc[n] + w * (cv.kc[n + 1] - cv.kc[n])
            X = cv.X[n] + w * (cv.X[n + 1] - cv.X[n])
            Y = cv.Y[n] + w * (cv.Y[n + 1] - cv.Y[n])
            d2 = float(_bilinear(wf[d2name], kc[None])[0])
            cross = float(_bilinear(wf[crossname], kc[None])[0])
            if abs(d2) > tol_c:
                pts.append(SingularPoint(float(X), float(Y), float(cv.x[n] + w * (cv.x[n + 1] - cv.x[n])),
                                         float(cv.t[n] + w * (cv.t[n + 1] - cv.t[n])), "ii", cv.family,
                                         {dname: 0.0, d2name: d2, crossname: cross}))
    hs = [c for c in curves if c.family == "backward"]
    gs = [c for c in curves if c.family == "forward"]
    for a in hs:
        for b in gs:
            A = np.stack([a.X, a.Y], axis=1)
            B = np.stack([b.X, b.Y], axis=1)
            for p, _, _ in _segment_intersections(A, B):
                kc = _kc_from_XY(state, p[0], p[1])[None]
                wit = {n: float(_bilinear(wf[n], kc)[0]) for n in ("l_X", "m_Y")}
                x = float(_bilinear(state.band("x"), kc)[0])
                t = float(_bilinear(state.band("t"), kc)[0])
                pts.append(SingularPoint(float(p[0]), float(p[1]), x, t, "iii", "both", wit))
    if cs is not None:
        for p in pts:
            kc = _kc_from_XY(state, p.X, p.Y)[None]
            u = float(_bilinear(state.band("u"), kc)[0])
            dc = derived_at(cs, np.array([p.x]), np.array([u]))
            p.witness["du_lam_m"] = float(dc.du_lam_m[0])
            p.witness["du_lam_p"] = float(dc.du_lam_p[0])
    return pts


def _cell_range(a):
    """min and max of a over lattice cells (i, j)-(i+1, j+1) anchored at band node (k, c)."""
    corners = np.stack([a, _shift(a, 1, 1), _shift(a, 1, 0), _shift(a, 2, 1)])
    return np.min(corners, axis=0), np.max(corners, axis=0)


def _vanishes(a, tol):
    lo, hi = _cell_range(a)
    return (lo <= tol) & (hi >= -tol)


def generic_report(state: StateField, cs: CoefficientSet | None = None, tol=None, tol_c=None,
                   tol_lambda: float = 1e-10) -> dict:
    """Flag lattice cells where one of the six forbidden value triples is attained.

    A component "vanishes on a cell" when the interval spanned by its four
    corner values, widened by the tolerance, contains zero.  h and g vanish
    on a cell crossed by the zero curve, detected through the sign of l
    (resp. m) on the half disc h < 1/2 for circle-consistent fields.
    """
    cs = cs or state.cs
    tol = 10 * EPS_CIRCLE if tol is None else tol
    tol_c = state.grid.delta if tol_c is None else tol_c
    wf = _witness_fields(state)
    circle = _on_circle(state)

    def zero_of(fname):
        f = wf[fname]
        if circle:
            part = state.band(PAIR[fname])
            lo, hi = _cell_range(np.where(f < 0.5, part, np.nan))
            flo, _ = _cell_range(f)
            return ((lo <= 0) & (hi >= 0)) | (flo <= tol)
        return _vanishes(f, tol)

    hz, gz_ = zero_of("h"), zero_of("g")
    ok = state.mask
    x, u = state.band("x"), state.band("u")
    dlm = np.full(x.shape, np.nan)
    dlp = np.full(x.shape, np.nan)
    dc = derived_at(cs, x[ok], u[ok])
    dlm[ok], dlp[ok] = dc.du_lam_m, dc.du_lam_p
    lX, mY = _vanishes(wf["l_X"], tol_c), _vanishes(wf["m_Y"], tol_c)
    triples = {
        "h,l_X,l_XX": hz & lX & _vanishes(wf["l_XX"], tol_c),
        "g,m_Y,m_YY": gz_ & mY & _vanishes(wf["m_YY"], tol_c),
        "h,g,l_X": hz & gz_ & lX,
        "h,g,m_Y": hz & gz_ & mY,
        "h,du_lam_m,l_X": hz & _vanishes(dlm, tol_lambda) & lX,
        "g,du_lam_p,m_Y": gz_ & _vanishes(dlp, tol_lambda) & mY,
    }
    N, d = state.N, state.grid.delta
    flags = []
    counts = {}
    for name, fl in triples.items():
        fl = fl & ok
        kk, cc = np.nonzero(fl)
        counts[name] = int(len(kk))
        for k, c in zip(kk[:200], cc[:200]):
            i = int(c - N)
            flags.append({"triple": name, "i": i, "j": int(k - i), "X": i * d, "Y": (k - i) * d,
                          "x": float(x[k, c]), "t": float(state.band("t")[k, c])})
    return {"tol": tol, "tol_c": tol_c, "tol_lambda": tol_lambda, "counts": counts,
            "n_flags": int(sum(counts.values())), "flags": flags}


def report_json(curves, points, path, extra: dict | None = None):
    doc = {
        "curves": [c.as_dict() for c in curves],
        "points": [asdict(p) for p in points],
        "n_type": {t: sum(p.type == t for p in points) for t in ("i", "ii", "iii")},
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def curves_csv(curves, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("curve", "family", "x", "t", "X", "Y"))
        for n, c in enumerate(curves):
            for a in range(len(c.X)):
                w.writerow([n, c.family, f"{c.x[a]:.17g}", f"{c.t[a]:.17g}", f"{c.X[a]:.17g}", f"{c.Y[a]:.17g}"])
