"""Pure numpy implementation of the diagonal march.

Every node of an anti-diagonal depends only on the previous diagonal, so
the update is vectorised along the diagonal.  The compiled kernel in
``_kernel.pyx`` performs the same arithmetic node by node.
"""
from __future__ import annotations

import numpy as np

from .dual import eval_d2
from .expr import ExprDomainError

U, L, M, H, G, P, Q, XX, T = range(9)

OK, NONPOSITIVE_PQ, NAN, PROJECTION, DIVERGENCE, DOMAIN = range(6)
DIVERGENCE_FLOOR = 1e-6


def speed_terms(a, ax, au, b, bx, bu, g, gx, gu):
    """c1, c2 and the lower-order coefficients from first partials of alpha, beta, gamma."""
    disc = np.sqrt(b * b + a * a * g * g)
    disc_x = (b * bx + a * g * (ax * g + a * gx)) / disc
    disc_u = (b * bu + a * g * (au * g + a * gu)) / disc
    c1 = (b - disc) / a
    c2 = (b + disc) / a
    c1x = (bx - disc_x - c1 * ax) / a
    c1u = (bu - disc_u - c1 * au) / a
    c2x = (bx + disc_x - c2 * ax) / a
    c2u = (bu + disc_u - c2 * au) / a
    cd = c2 - c1
    a1 = (c1 * au - a * c1u) / (2 * a * cd)
    a2 = (c2 * au - a * c2u) / (2 * a * cd)
    bb = (a * (c1x - c2x) + (c1 - c2) * ax) / (2 * a * cd)
    base = (c2 * c1x - c1 * c2x) / (2 * cd)
    d1 = base + (a * c1x - c1 * ax) / (2 * a)
    d2 = base + (a * c2x - c2 * ax) / (2 * a)
    e = -base
    return c1, c2, a1, a2, bb, d1, d2, e


def coefficients(cs, x, u):
    """(alpha, c1, c2, a1, a2, b, d1, d2, e) at the given points."""
    al = eval_d2(cs.alpha, x, u)
    be = eval_d2(cs.beta, x, u)
    ga = eval_d2(cs.gamma, x, u)
    terms = speed_terms(al.value, al.d_x, al.d_u, be.value, be.d_x, be.d_u, ga.value, ga.d_x, ga.d_u)
    return (al.value,) + terms


def rhs(coef, l, m, h, g, p, q):
    """Right-hand sides: (FY_l, FY_h, FY_p), (FX_m, FX_g, FX_q, FX_u, FX_x, FX_t)."""
    a, c1, c2, a1, a2, b, d1, d2, e = coef
    cd = c2 - c1
    s = a1 + a2
    A = a1 * g + a2 * h - s * (g * h + m * l) + c2 * b * h * m - d1 * g * l
    B = -a1 * g - a2 * h + s * (g * h + m * l) + c1 * b * g * l - d2 * h * m
    cross = s * (h * m - g * l)
    fy = (
        q * (2 * h - 1) / cd * A,
        -2 * q * l / cd * A,
        2 * p * q / cd * (a2 * (l - m) + cross + c2 * b * m * l + d1 * g * h + e * g),
    )
    fx = (
        p * (2 * g - 1) / cd * B,
        -2 * p * m / cd * B,
        2 * p * q / cd * (a1 * (l - m) + cross + c1 * b * m * l + d2 * g * h + e * h),
        p * l / cd,
        c2 * p * h / cd,
        a * p * h / cd,
    )
    return fy, fx


def y_rhs_uxt(coef, m, g, q):
    """Y-direction right-hand sides of u, x, t (used only as diagnostics)."""
    a, c1, c2 = coef[0], coef[1], coef[2]
    cd = c2 - c1
    return q * m / cd, c1 * q * g / cd, a * q * g / cd


def renormalize(l, h):
    """Project (l, h - 1/2) radially onto the circle of radius 1/2.

    Returns (l, h, drift, failed) where drift is |l^2 + h^2 - h| before projection.
    """
    drift = np.abs(l * l + h * h - h)
    r = np.hypot(l, h - 0.5)
    failed = r == 0
    scale = np.where(failed, 1.0, 0.5 / np.where(failed, 1.0, r))
    return l * scale, 0.5 + (h - 0.5) * scale, drift, failed


def _node_rhs(cs, F, k, cols):
    x = F[XX, k, cols]
    u = F[U, k, cols]
    coef = coefficients(cs, x, u)
    return rhs(coef, F[L, k, cols], F[M, k, cols], F[H, k, cols], F[G, k, cols], F[P, k, cols], F[Q, k, cols])


def update_row(cs, Sv, Wv, fyS, fxW, delta, iters=3, renorm=True):
    """Trapezoidal predictor-corrector for a set of independent nodes.

    ``Sv``/``Wv`` are (9, n) values at the south/west neighbours and
    ``fyS``/``fxW`` their cached right-hand sides.  Returns
    (vals, status, bad_index, drift, fy, fx) with the node right-hand sides
    evaluated at the final values.
    """
    l = Sv[L] + delta * fyS[0]
    h = Sv[H] + delta * fyS[1]
    p = Sv[P] + delta * fyS[2]
    m = Wv[M] + delta * fxW[0]
    g = Wv[G] + delta * fxW[1]
    q = Wv[Q] + delta * fxW[2]
    u = Wv[U] + delta * fxW[3]
    x = Wv[XX] + delta * fxW[4]
    t = Wv[T] + delta * fxW[5]
    half = 0.5 * delta
    drift = 0.0
    last_change = np.inf
    for it in range(iters):
        try:
            coef = coefficients(cs, x, u)
        except ExprDomainError:
            return None, DOMAIN, -1, drift, None, None
        fy, fx = rhs(coef, l, m, h, g, p, q)
        nl = Sv[L] + half * (fyS[0] + fy[0])
        nh = Sv[H] + half * (fyS[1] + fy[1])
        npp = Sv[P] + half * (fyS[2] + fy[2])
        nm = Wv[M] + half * (fxW[0] + fx[0])
        ng = Wv[G] + half * (fxW[1] + fx[1])
        nq = Wv[Q] + half * (fxW[2] + fx[2])
        nu = Wv[U] + half * (fxW[3] + fx[3])
        nx = Wv[XX] + half * (fxW[4] + fx[4])
        nt = Wv[T] + half * (fxW[5] + fx[5])
        if renorm:
            nl, nh, d1, f1 = renormalize(nl, nh)
            nm, ng, d2, f2 = renormalize(nm, ng)
            if np.any(f1 | f2):
                return None, PROJECTION, int(np.argmax(f1 | f2)), drift, None, None
            if it == iters - 1:
                drift = max(float(np.max(d1, initial=0.0)), float(np.max(d2, initial=0.0)))
        change = np.max(np.abs(np.stack([nl - l, nh - h, nm - m, ng - g, nu - u, nx - x, nt - t])), axis=0)
        change = np.maximum(change, np.abs(npp - p) / (1 + np.abs(p)))
        change = np.maximum(change, np.abs(nq - q) / (1 + np.abs(q)))
        cmax = float(np.max(change, initial=0.0))
        if it >= 1 and cmax > last_change and cmax > DIVERGENCE_FLOOR:
            return None, DIVERGENCE, int(np.argmax(change)), drift, None, None
        last_change = cmax
        l, h, p, m, g, q, u, x, t = nl, nh, npp, nm, ng, nq, nu, nx, nt
    vals = np.stack([u, l, m, h, g, p, q, x, t])
    finite = np.all(np.isfinite(vals), axis=0)
    if not np.all(finite):
        return None, NAN, int(np.argmin(finite)), drift, None, None
    pos = (p > 0) & (q > 0)
    if not np.all(pos):
        return None, NONPOSITIVE_PQ, int(np.argmin(pos)), drift, None, None
    try:
        coef = coefficients(cs, x, u)
    except ExprDomainError:
        return None, DOMAIN, -1, drift, None, None
    fy, fx = rhs(coef, l, m, h, g, p, q)
    return vals, OK, -1, drift, np.array(fy), np.array(fx)


def march(F, k_start, k_end, cs, delta, iters=3, renorm=True, t_stop=np.inf):
    """March rows k_start..k_end-1 of the band array F in place.

    ``F[f, k, c]`` holds field f at lattice node i = c - N, j = k - i.
    Returns (rows_done, status, fail_k, fail_c, max_drift).
    """
    W = F.shape[2]
    max_drift = 0.0
    with np.errstate(all="ignore"):
        try:
            fy_prev, fx_prev = _node_rhs(cs, F, k_start - 1, np.arange(k_start - 1, W))
        except ExprDomainError:
            return k_start, DOMAIN, k_start - 1, -1, max_drift
        fy_prev = np.array(fy_prev)
        fx_prev = np.array(fx_prev)
        off = k_start - 1  # column of the first cached entry
        for k in range(k_start, k_end):
            if k > W - 1:
                return k, OK, -1, -1, max_drift
            cols = np.arange(k, W)
            vals, status, bad, drift, fy, fx = update_row(
                cs, F[:, k - 1, cols], F[:, k - 1, cols - 1],
                fy_prev[:, cols - off], fx_prev[:, cols - 1 - off], delta, iters, renorm,
            )
            max_drift = max(max_drift, drift)
            if status != OK:
                return k, status, k, int(cols[bad]) if bad >= 0 else -1, max_drift
            F[:, k, cols] = vals
            fy_prev, fx_prev, off = fy, fx, k
            if float(np.min(vals[T])) > t_stop:
                return k + 1, OK, -1, -1, max_drift
    return k_end, OK, -1, -1, max_drift
