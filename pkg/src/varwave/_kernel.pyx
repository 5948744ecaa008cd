# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled diagonal march.  Same arithmetic as ``_march_py.march``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, exp, tanh, pow, fabs, hypot, isfinite, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF OP_CONST = 0
DEF OP_X = 1
DEF OP_U = 2
DEF OP_ADD = 3
DEF OP_SUB = 4
DEF OP_MUL = 5
DEF OP_DIV = 6
DEF OP_NEG = 7
DEF OP_POW = 8
DEF OP_SIN = 9
DEF OP_COS = 10
DEF OP_EXP = 11
DEF OP_SQRT = 12
DEF OP_TANH = 13

DEF S_OK = 0
DEF S_NONPOS = 1
DEF S_NAN = 2
DEF S_PROJ = 3
DEF S_DIV = 4
DEF S_DOMAIN = 5

DEF DIVERGENCE_FLOOR = 1e-6

ctypedef struct D3:
    double v
    double x
    double u

ctypedef struct Tape:
    int n
    int* ops
    int* args
    double* consts
    D3* slots


cdef int eval_tape(Tape* tp, double x, double u, D3* out) noexcept nogil:
    cdef int i, a, b, op
    cdef double f, f1, c
    cdef D3* s = tp.slots
    for i in range(tp.n):
        op = tp.ops[i]
        a = tp.args[2 * i]
        b = tp.args[2 * i + 1]
        if op == OP_CONST:
            s[i].v = tp.consts[i]; s[i].x = 0.0; s[i].u = 0.0
        elif op == OP_X:
            s[i].v = x; s[i].x = 1.0; s[i].u = 0.0
        elif op == OP_U:
            s[i].v = u; s[i].x = 0.0; s[i].u = 1.0
        elif op == OP_ADD:
            s[i].v = s[a].v + s[b].v; s[i].x = s[a].x + s[b].x; s[i].u = s[a].u + s[b].u
        elif op == OP_SUB:
            s[i].v = s[a].v - s[b].v; s[i].x = s[a].x - s[b].x; s[i].u = s[a].u - s[b].u
        elif op == OP_MUL:
            s[i].v = s[a].v * s[b].v
            s[i].x = s[a].x * s[b].v + s[a].v * s[b].x
            s[i].u = s[a].u * s[b].v + s[a].v * s[b].u
        elif op == OP_DIV:
            if s[b].v == 0.0:
                return 1
            f = 1.0 / s[b].v
            s[i].v = s[a].v * f
            s[i].x = (s[a].x - s[i].v * s[b].x) * f
            s[i].u = (s[a].u - s[i].v * s[b].u) * f
        elif op == OP_NEG:
            s[i].v = -s[a].v; s[i].x = -s[a].x; s[i].u = -s[a].u
        else:
            c = s[a].v
            if op == OP_POW:
                f = pow(c, tp.consts[i])
                f1 = tp.consts[i] * pow(c, tp.consts[i] - 1.0)
            elif op == OP_SIN:
                f = sin(c); f1 = cos(c)
            elif op == OP_COS:
                f = cos(c); f1 = -sin(c)
            elif op == OP_EXP:
                f = exp(c); f1 = f
            elif op == OP_SQRT:
                if c <= 0.0:
                    return 1
                f = sqrt(c); f1 = 0.5 / f
            else:
                f = tanh(c); f1 = 1.0 - f * f
            s[i].v = f; s[i].x = f1 * s[a].x; s[i].u = f1 * s[a].u
        if not isfinite(s[i].v):
            return 1
    out[0] = s[tp.n - 1]
    return 0


cdef int coeffs(Tape* ta, Tape* tb, Tape* tg, double x, double u, double* cf) noexcept nogil:
    """cf <- (alpha, c1, c2, a1, a2, b, d1, d2, e)."""
    cdef D3 A, B, G
    if eval_tape(ta, x, u, &A) or eval_tape(tb, x, u, &B) or eval_tape(tg, x, u, &G):
        return 1
    cdef double a = A.v, ax = A.x, au = A.u
    cdef double b = B.v, bx = B.x, bu = B.u
    cdef double g = G.v, gx = G.x, gu = G.u
    if a <= 0.0:
        return 1
    cdef double disc = sqrt(b * b + a * a * g * g)
    if disc <= 0.0:
        return 1
    cdef double disc_x = (b * bx + a * g * (ax * g + a * gx)) / disc
    cdef double disc_u = (b * bu + a * g * (au * g + a * gu)) / disc
    cdef double c1 = (b - disc) / a
    cdef double c2 = (b + disc) / a
    cdef double c1x = (bx - disc_x - c1 * ax) / a
    cdef double c1u = (bu - disc_u - c1 * au) / a
    cdef double c2x = (bx + disc_x - c2 * ax) / a
    cdef double c2u = (bu + disc_u - c2 * au) / a
    cdef double cd = c2 - c1
    cdef double base = (c2 * c1x - c1 * c2x) / (2 * cd)
    cf[0] = a
    cf[1] = c1
    cf[2] = c2
    cf[3] = (c1 * au - a * c1u) / (2 * a * cd)
    cf[4] = (c2 * au - a * c2u) / (2 * a * cd)
    cf[5] = (a * (c1x - c2x) + (c1 - c2) * ax) / (2 * a * cd)
    cf[6] = base + (a * c1x - c1 * ax) / (2 * a)
    cf[7] = base + (a * c2x - c2 * ax) / (2 * a)
    cf[8] = -base
    return 0


cdef inline void rhs(double* cf, double l, double m, double h, double g, double p, double q,
                     double* fy, double* fx) noexcept nogil:
    cdef double a = cf[0], c1 = cf[1], c2 = cf[2], a1 = cf[3], a2 = cf[4]
    cdef double b = cf[5], d1 = cf[6], d2 = cf[7], e = cf[8]
    cdef double cd = c2 - c1
    cdef double s = a1 + a2
    cdef double A = a1 * g + a2 * h - s * (g * h + m * l) + c2 * b * h * m - d1 * g * l
    cdef double B = -a1 * g - a2 * h + s * (g * h + m * l) + c1 * b * g * l - d2 * h * m
    cdef double cross = s * (h * m - g * l)
    fy[0] = q * (2 * h - 1) / cd * A
    fy[1] = -2 * q * l / cd * A
    fy[2] = 2 * p * q / cd * (a2 * (l - m) + cross + c2 * b * m * l + d1 * g * h + e * g)
    fx[0] = p * (2 * g - 1) / cd * B
    fx[1] = -2 * p * m / cd * B
    fx[2] = 2 * p * q / cd * (a1 * (l - m) + cross + c1 * b * m * l + d2 * g * h + e * h)
    fx[3] = p * l / cd
    fx[4] = c2 * p * h / cd
    fx[5] = a * p * h / cd


cdef Tape make_tape(tape, D3* slots):
    cdef Tape t
    cdef int[::1] ops = tape[0]
    cdef int[::1] args = tape[1].reshape(-1)
    cdef double[::1] consts = tape[2]
    t.n = ops.shape[0]
    t.ops = &ops[0]
    t.args = &args[0]
    t.consts = &consts[0]
    t.slots = slots
    return t


def march(double[:, :, ::1] F, int k_start, int k_end, tape_a, tape_b, tape_g,
          double delta, int iters=3, bint renorm=True, double t_stop=INFINITY):
    """March rows k_start..k_end-1 of F in place; see ``_march_py.march``."""
    cdef int W = F.shape[2]
    cdef int k, c, it, f, j, status = S_OK, fail_k = -1, fail_c = -1, rows_done = k_end
    cdef double max_drift = 0.0
    cdef double cf[9]
    cdef double fy[3]
    cdef double fx[6]
    cdef double half = 0.5 * delta
    cdef double l, h, p, m, g, q, u, x, t, nl, nh, npp, nm, ng, nq, nu, nx, nt
    cdef double r, sc, d1, d2, change, last_change, tmin

    # tapes must stay alive: hold contiguous copies
    ta_arr = [np.ascontiguousarray(tape_a[0], dtype=np.int32), np.ascontiguousarray(tape_a[1], dtype=np.int32),
              np.ascontiguousarray(tape_a[2], dtype=np.float64)]
    tb_arr = [np.ascontiguousarray(tape_b[0], dtype=np.int32), np.ascontiguousarray(tape_b[1], dtype=np.int32),
              np.ascontiguousarray(tape_b[2], dtype=np.float64)]
    tg_arr = [np.ascontiguousarray(tape_g[0], dtype=np.int32), np.ascontiguousarray(tape_g[1], dtype=np.int32),
              np.ascontiguousarray(tape_g[2], dtype=np.float64)]
    cdef int nslots = max(len(ta_arr[0]), len(tb_arr[0]), len(tg_arr[0]))
    cdef D3* slots = <D3*> malloc(nslots * sizeof(D3))
    cdef Tape ta = make_tape(ta_arr, slots)
    cdef Tape tb = make_tape(tb_arr, slots)
    cdef Tape tg = make_tape(tg_arr, slots)

    # cached right-hand sides of the previous row, indexed by column
    cdef double[:, ::1] FYp = np.zeros((3, W))
    cdef double[:, ::1] FXp = np.zeros((6, W))
    cdef double[:, ::1] FYc = np.zeros((3, W))
    cdef double[:, ::1] FXc = np.zeros((6, W))
    cdef double[:, ::1] tmp

    try:
        with nogil:
            k = k_start - 1
            for c in range(k, W):
                if coeffs(&ta, &tb, &tg, F[7, k, c], F[0, k, c], cf):
                    status = S_DOMAIN; fail_k = k; fail_c = c
                    break
                rhs(cf, F[1, k, c], F[2, k, c], F[3, k, c], F[4, k, c], F[5, k, c], F[6, k, c], fy, fx)
                for f in range(3):
                    FYp[f, c] = fy[f]
                for f in range(6):
                    FXp[f, c] = fx[f]
            if status == S_OK:
                for k in range(k_start, k_end):
                    if k > W - 1:
                        rows_done = k
                        break
                    tmin = INFINITY
                    for c in range(k, W):
                        # predictor from south (l, h, p) and west (m, g, q, u, x, t)
                        l = F[1, k - 1, c] + delta * FYp[0, c]
                        h = F[3, k - 1, c] + delta * FYp[1, c]
                        p = F[5, k - 1, c] + delta * FYp[2, c]
                        m = F[2, k - 1, c - 1] + delta * FXp[0, c - 1]
                        g = F[4, k - 1, c - 1] + delta * FXp[1, c - 1]
                        q = F[6, k - 1, c - 1] + delta * FXp[2, c - 1]
                        u = F[0, k - 1, c - 1] + delta * FXp[3, c - 1]
                        x = F[7, k - 1, c - 1] + delta * FXp[4, c - 1]
                        t = F[8, k - 1, c - 1] + delta * FXp[5, c - 1]
                        last_change = INFINITY
                        for it in range(iters):
                            if coeffs(&ta, &tb, &tg, x, u, cf):
                                status = S_DOMAIN; fail_k = k; fail_c = c
                                break
                            rhs(cf, l, m, h, g, p, q, fy, fx)
                            nl = F[1, k - 1, c] + half * (FYp[0, c] + fy[0])
                            nh = F[3, k - 1, c] + half * (FYp[1, c] + fy[1])
                            npp = F[5, k - 1, c] + half * (FYp[2, c] + fy[2])
                            nm = F[2, k - 1, c - 1] + half * (FXp[0, c - 1] + fx[0])
                            ng = F[4, k - 1, c - 1] + half * (FXp[1, c - 1] + fx[1])
                            nq = F[6, k - 1, c - 1] + half * (FXp[2, c - 1] + fx[2])
                            nu = F[0, k - 1, c - 1] + half * (FXp[3, c - 1] + fx[3])
                            nx = F[7, k - 1, c - 1] + half * (FXp[4, c - 1] + fx[4])
                            nt = F[8, k - 1, c - 1] + half * (FXp[5, c - 1] + fx[5])
                            if renorm:
                                d1 = fabs(nl * nl + nh * nh - nh)
                                d2 = fabs(nm * nm + ng * ng - ng)
                                r = hypot(nl, nh - 0.5)
                                if r == 0.0:
                                    status = S_PROJ; fail_k = k; fail_c = c
                                    break
                                sc = 0.5 / r
                                nl = nl * sc
                                nh = 0.5 + (nh - 0.5) * sc
                                r = hypot(nm, ng - 0.5)
                                if r == 0.0:
                                    status = S_PROJ; fail_k = k; fail_c = c
                                    break
                                sc = 0.5 / r
                                nm = nm * sc
                                ng = 0.5 + (ng - 0.5) * sc
                                if it == iters - 1:
                                    if d1 > max_drift:
                                        max_drift = d1
                                    if d2 > max_drift:
                                        max_drift = d2
                            change = fabs(nl - l)
                            change = max(change, fabs(nh - h))
                            change = max(change, fabs(nm - m))
                            change = max(change, fabs(ng - g))
                            change = max(change, fabs(nu - u))
                            change = max(change, fabs(nx - x))
                            change = max(change, fabs(nt - t))
                            change = max(change, fabs(npp - p) / (1 + fabs(p)))
                            change = max(change, fabs(nq - q) / (1 + fabs(q)))
                            if it >= 1 and change > last_change and change > DIVERGENCE_FLOOR:
                                status = S_DIV; fail_k = k; fail_c = c
                                break
                            last_change = change
                            l = nl; h = nh; p = npp; m = nm; g = ng; q = nq; u = nu; x = nx; t = nt
                        if status != S_OK:
                            break
                        if not (isfinite(u) and isfinite(l) and isfinite(m) and isfinite(h) and isfinite(g)
                                and isfinite(p) and isfinite(q) and isfinite(x) and isfinite(t)):
                            status = S_NAN; fail_k = k; fail_c = c
                            break
                        if p <= 0.0 or q <= 0.0:
                            status = S_NONPOS; fail_k = k; fail_c = c
                            break
                        F[0, k, c] = u; F[1, k, c] = l; F[2, k, c] = m; F[3, k, c] = h; F[4, k, c] = g
                        F[5, k, c] = p; F[6, k, c] = q; F[7, k, c] = x; F[8, k, c] = t
                        if t < tmin:
                            tmin = t
                        if coeffs(&ta, &tb, &tg, x, u, cf):
                            status = S_DOMAIN; fail_k = k; fail_c = c
                            break
                        rhs(cf, l, m, h, g, p, q, fy, fx)
                        for f in range(3):
                            FYc[f, c] = fy[f]
                        for f in range(6):
                            FXc[f, c] = fx[f]
                    if status != S_OK:
                        rows_done = k
                        break
                    for f in range(3):
                        for j in range(k, W):
                            FYp[f, j] = FYc[f, j]
                    for f in range(6):
                        for j in range(k, W):
                            FXp[f, j] = FXc[f, j]
                    if tmin > t_stop:
                        rows_done = k + 1
                        break
            else:
                rows_done = k_start
    finally:
        free(slots)
    return rows_done, status, fail_k, fail_c, max_drift
