"""Second-order forward-mode dual numbers in the two variables (x, u).

Components may be floats or numpy arrays of a common shape, so one
evaluation pass can cover a whole lattice diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import BinOp, Call, ExprDomainError, Neg, Num, Pow, Var


@dataclass
class Dual2:
    value: object
    d_x: object = 0.0
    d_u: object = 0.0
    d_xx: object = 0.0
    d_xu: object = 0.0
    d_uu: object = 0.0

    @staticmethod
    def const(c):
        return Dual2(c)

    @staticmethod
    def var_x(x):
        return Dual2(x, 1.0, 0.0)

    @staticmethod
    def var_u(u):
        return Dual2(u, 0.0, 1.0)

    def _chain(self, f0, f1, f2):
        """Apply a scalar function with derivatives f0, f1, f2 at self.value."""
        return Dual2(
            f0,
            f1 * self.d_x,
            f1 * self.d_u,
            f2 * self.d_x * self.d_x + f1 * self.d_xx,
            f2 * self.d_x * self.d_u + f1 * self.d_xu,
            f2 * self.d_u * self.d_u + f1 * self.d_uu,
        )

    def __add__(self, o):
        if not isinstance(o, Dual2):
            return Dual2(self.value + o, self.d_x, self.d_u, self.d_xx, self.d_xu, self.d_uu)
        return Dual2(
            self.value + o.value,
            self.d_x + o.d_x,
            self.d_u + o.d_u,
            self.d_xx + o.d_xx,
            self.d_xu + o.d_xu,
            self.d_uu + o.d_uu,
        )

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.value, -self.d_x, -self.d_u, -self.d_xx, -self.d_xu, -self.d_uu)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, Dual2):
            return Dual2(
                self.value * o, self.d_x * o, self.d_u * o, self.d_xx * o, self.d_xu * o, self.d_uu * o
            )
        a, b = self, o
        return Dual2(
            a.value * b.value,
            a.d_x * b.value + a.value * b.d_x,
            a.d_u * b.value + a.value * b.d_u,
            a.d_xx * b.value + 2 * a.d_x * b.d_x + a.value * b.d_xx,
            a.d_xu * b.value + a.d_x * b.d_u + a.d_u * b.d_x + a.value * b.d_xu,
            a.d_uu * b.value + 2 * a.d_u * b.d_u + a.value * b.d_uu,
        )

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        if np.any(np.asarray(v) == 0):
            raise ExprDomainError("division by zero")
        return self._chain(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, o):
        if not isinstance(o, Dual2):
            return self * (1.0 / o)
        return self * o.reciprocal()

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def __pow__(self, p: float):
        v = self.value
        arr = np.asarray(v)
        if p == 0:
            return Dual2(np.ones_like(arr) if arr.ndim else 1.0)
        if p == 1:
            return self
        if p == int(p):
            if p < 0 and np.any(arr == 0):
                raise ExprDomainError("negative power of zero")
        elif np.any(arr < 0) or (p < 2 and np.any(arr == 0)):
            raise ExprDomainError("fractional power of a nonpositive base")
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def sqrt(self):
        v = self.value
        if np.any(np.asarray(v) <= 0):
            raise ExprDomainError("sqrt of a nonpositive number")
        s = np.sqrt(v)
        return self._chain(s, 0.5 / s, -0.25 / (s * v))

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._chain(c, -s, -c)

    def exp(self):
        e = np.exp(self.value)
        return self._chain(e, e, e)

    def tanh(self):
        t = np.tanh(self.value)
        s2 = 1.0 - t * t
        return self._chain(t, s2, -2.0 * t * s2)

    def as_tuple(self):
        return (self.value, self.d_x, self.d_u, self.d_xx, self.d_xu, self.d_uu)


def _broadcast(c, like):
    return c + 0.0 * like if np.ndim(like) else c


def eval_d2(e, x, u) -> Dual2:
    """Value and all first and second partials of ``e`` at (x, u)."""
    with np.errstate(all="ignore"):
        out = _walk(e, Dual2.var_x(x), Dual2.var_u(u), x)
    vals = np.asarray(out.value, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ExprDomainError("non-finite value")
    # make every component an array of the evaluation shape
    shape = np.shape(x) if np.ndim(x) else np.shape(u)
    if shape:
        z = np.zeros(shape)
        out = Dual2(*(np.asarray(c, dtype=float) + z for c in out.as_tuple()))
    else:
        out = Dual2(*(float(c) for c in out.as_tuple()))
    return out


def _walk(e, X, U, like):
    if isinstance(e, Num):
        return Dual2(_broadcast(e.value, like))
    if isinstance(e, Var):
        return X if e.name == "x" else U
    if isinstance(e, Neg):
        return -_walk(e.arg, X, U, like)
    if isinstance(e, Call):
        return getattr(_walk(e.arg, X, U, like), e.fn)()
    if isinstance(e, Pow):
        return _walk(e.base, X, U, like) ** e.exponent
    a = _walk(e.left, X, U, like)
    b = _walk(e.right, X, U, like)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return a / b
