"""Coefficient sets alpha(x,u), beta(x,u), gamma(x,u) and derived quantities.

The equation is

    (alpha^2 u_t + beta u_x)_t + (beta u_t - gamma^2 u_x)_x
        = alpha alpha_u u_t^2 + beta_u u_t u_x - gamma gamma_u u_x^2

with characteristic speeds lambda_-/+ = (beta -/+ sqrt(beta^2 + alpha^2 gamma^2)) / alpha^2
and c_1 = alpha lambda_-, c_2 = alpha lambda_+.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dual import Dual2, eval_d2
from .expr import Expr, ExprDomainError, is_constant, parse_expr, to_text


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    alpha1: float
    alpha2: float
    beta2: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not (0 < self.alpha1 <= self.alpha2):
            raise CoefficientError("need 0 < alpha1 <= alpha2")
        if not (0 < self.gamma1 <= self.gamma2):
            raise CoefficientError("need 0 < gamma1 <= gamma2")
        if self.beta2 < 0:
            raise CoefficientError("need beta2 >= 0")


@dataclass(frozen=True)
class CoefficientSet:
    alpha: Expr
    beta: Expr
    gamma: Expr
    bounds: Bounds
    domain: tuple = (-10.0, 10.0, -5.0, 5.0)  # x_lo, x_hi, u_lo, u_hi

    @classmethod
    def from_text(cls, alpha: str, beta: str, gamma: str, bounds, domain=None):
        if not isinstance(bounds, Bounds):
            bounds = Bounds(*bounds)
        kw = {} if domain is None else {"domain": tuple(float(v) for v in domain)}
        return cls(parse_expr(str(alpha)), parse_expr(str(beta)), parse_expr(str(gamma)), bounds, **kw)

    def is_constant(self) -> bool:
        return all(is_constant(e) for e in (self.alpha, self.beta, self.gamma))

    def as_dict(self) -> dict:
        b = self.bounds
        return {
            "alpha": to_text(self.alpha),
            "beta": to_text(self.beta),
            "gamma": to_text(self.gamma),
            "bounds": [b.alpha1, b.alpha2, b.beta2, b.gamma1, b.gamma2],
            "domain": list(self.domain),
        }

    def max_speed(self) -> float:
        """Upper bound for max(|c_1|, c_2) implied by the declared bounds."""
        b = self.bounds
        return (b.beta2 + np.hypot(b.beta2, b.alpha2 * b.gamma2)) / b.alpha1


@dataclass
class DerivedCoeffs:
    alpha: object
    beta: object
    gamma: object
    lam_m: object
    lam_p: object
    c1: object
    c2: object
    a1: object
    a2: object
    b: object
    d1: object
    d2: object
    dx_alpha: object
    du_alpha: object
    dx_c1: object
    du_c1: object
    dx_c2: object
    du_c2: object
    du_lam_m: object
    du_lam_p: object
    duu_lam_m: object
    duu_lam_p: object
    dux_lam_m: object
    dux_lam_p: object

    @property
    def e(self):
        """(c1 dx c2 - c2 dx c1) / (2 (c2 - c1)), the x-gradient weight of the p, q equations."""
        return (self.c1 * self.dx_c2 - self.c2 * self.dx_c1) / (2.0 * (self.c2 - self.c1))


def _speeds(al: Dual2, be: Dual2, ga: Dual2):
    disc = (be * be + al * al * ga * ga).sqrt()
    inv_a2 = (al * al).reciprocal()
    lam_m = (be - disc) * inv_a2
    lam_p = (be + disc) * inv_a2
    return lam_m, lam_p, lam_m * al, lam_p * al


def derived_at(cs: CoefficientSet, x, u) -> DerivedCoeffs:
    """All derived coefficients at (x, u); scalars or equal-shape arrays."""
    al = eval_d2(cs.alpha, x, u)
    be = eval_d2(cs.beta, x, u)
    ga = eval_d2(cs.gamma, x, u)
    if np.any(np.asarray(al.value) <= 0):
        raise CoefficientError("alpha must be positive")
    lam_m, lam_p, c1, c2 = _speeds(al, be, ga)
    cd = c2.value - c1.value
    if np.any(np.asarray(cd) <= 0):
        raise CoefficientError("non-hyperbolic point: c2 - c1 <= 0")
    a = al.value
    a1 = (c1.value * al.d_u - a * c1.d_u) / (2 * a * cd)
    a2 = (c2.value * al.d_u - a * c2.d_u) / (2 * a * cd)
    b = (a * (c1.d_x - c2.d_x) + (c1.value - c2.value) * al.d_x) / (2 * a * cd)
    base = (c2.value * c1.d_x - c1.value * c2.d_x) / (2 * cd)
    d1 = base + (a * c1.d_x - c1.value * al.d_x) / (2 * a)
    d2 = base + (a * c2.d_x - c2.value * al.d_x) / (2 * a)
    return DerivedCoeffs(
        alpha=a,
        beta=be.value,
        gamma=ga.value,
        lam_m=lam_m.value,
        lam_p=lam_p.value,
        c1=c1.value,
        c2=c2.value,
        a1=a1,
        a2=a2,
        b=b,
        d1=d1,
        d2=d2,
        dx_alpha=al.d_x,
        du_alpha=al.d_u,
        dx_c1=c1.d_x,
        du_c1=c1.d_u,
        dx_c2=c2.d_x,
        du_c2=c2.d_u,
        du_lam_m=lam_m.d_u,
        du_lam_p=lam_p.d_u,
        duu_lam_m=lam_m.d_uu,
        duu_lam_p=lam_p.d_uu,
        dux_lam_m=lam_m.d_xu,
        dux_lam_p=lam_p.d_xu,
    )


@dataclass
class ConditionReport:
    n_samples: int
    bound_violations: list = field(default_factory=list)
    nonfinite: list = field(default_factory=list)
    gradient_sup: dict = field(default_factory=dict)
    generic_violations: list = field(default_factory=list)
    dlambda_zeros: list = field(default_factory=list)

    @property
    def bounds_ok(self) -> bool:
        return not self.bound_violations and not self.nonfinite

    @property
    def generic_ok(self) -> bool:
        return not self.generic_violations

    def summary(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "bounds_ok": self.bounds_ok,
            "n_bound_violations": len(self.bound_violations),
            "n_nonfinite": len(self.nonfinite),
            "gradient_sup": self.gradient_sup,
            "generic_ok": self.generic_ok,
            "n_generic_violations": len(self.generic_violations),
            "dlambda_zeros": self.dlambda_zeros,
        }


GENERIC_TOL = 1e-10


def validate_conditions(cs: CoefficientSet, n_samples: int = 41) -> ConditionReport:
    """Audit bounds and the generic condition on an n_samples x n_samples grid."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    x_lo, x_hi, u_lo, u_hi = cs.domain
    xs = np.linspace(x_lo, x_hi, n_samples)
    us = np.linspace(u_lo, u_hi, n_samples)
    X, U = np.meshgrid(xs, us, indexing="ij")
    rep = ConditionReport(n_samples=n_samples)
    b = cs.bounds
    duals = {}
    for name in ("alpha", "beta", "gamma"):
        try:
            duals[name] = eval_d2(getattr(cs, name), X, U)
        except ExprDomainError as exc:
            rep.nonfinite.append({"name": name, "error": str(exc)})
    if rep.nonfinite:
        return rep
    al, be, ga = duals["alpha"].value, duals["beta"].value, duals["gamma"].value
    checks = [
        ("alpha", al, al < b.alpha1, b.alpha1, "alpha < alpha1"),
        ("alpha", al, al > b.alpha2, b.alpha2, "alpha > alpha2"),
        ("beta", be, np.abs(be) > b.beta2, b.beta2, "|beta| > beta2"),
        ("gamma", ga, ga < b.gamma1, b.gamma1, "gamma < gamma1"),
        ("gamma", ga, ga > b.gamma2, b.gamma2, "gamma > gamma2"),
    ]
    for name, val, mask, bound, why in checks:
        for i, j in zip(*np.nonzero(mask)):
            rep.bound_violations.append(
                {"x": float(X[i, j]), "u": float(U[i, j]), "name": name, "value": float(val[i, j]),
                 "bound": bound, "rule": why}
            )
    for name, d in duals.items():
        sup = {k: float(np.max(np.abs(getattr(d, k)))) for k in ("d_x", "d_u", "d_xx", "d_xu", "d_uu")}
        rep.gradient_sup[name] = sup
        for k, v in sup.items():
            if not np.isfinite(v):
                rep.nonfinite.append({"name": name, "partial": k})
    if rep.nonfinite or np.any(al <= 0):
        return rep
    dc = derived_at(cs, X, U)
    for fam, du, duu, dux in (
        ("minus", dc.du_lam_m, dc.duu_lam_m, dc.dux_lam_m),
        ("plus", dc.du_lam_p, dc.duu_lam_p, dc.dux_lam_p),
    ):
        flat = (np.abs(du) <= GENERIC_TOL) & (np.abs(duu) <= GENERIC_TOL) & (np.abs(dux) <= GENERIC_TOL)
        for i, j in zip(*np.nonzero(flat)):
            rep.generic_violations.append({"x": float(X[i, j]), "u": float(U[i, j]), "family": fam})
        # isolated zeros of du lambda along u, located by linear interpolation
        s = np.sign(du)
        change = (s[:, :-1] * s[:, 1:] < 0)
        for i, j in zip(*np.nonzero(change)):
            f0, f1 = du[i, j], du[i, j + 1]
            w = f0 / (f0 - f1)
            uz = U[i, j] + w * (U[i, j + 1] - U[i, j])
            rep.dlambda_zeros.append(
                {"x": float(X[i, j]), "u": float(uz), "family": fam,
                 "duu": float(duu[i, j] + w * (duu[i, j + 1] - duu[i, j])),
                 "dux": float(dux[i, j] + w * (dux[i, j + 1] - dux[i, j]))}
            )
    return rep


# Builtin coefficient families.

def _poly(coeffs) -> str:
    terms = []
    for k, c in enumerate(coeffs):
        c = float(c)
        if c == 0:
            continue
        terms.append(repr(c) if k == 0 else f"{c!r}*u^{k}")
    return " + ".join(terms) if terms else "0"


def builtin(name: str, params: dict, bounds, domain=None) -> CoefficientSet:
    """Construct a named coefficient family.

    ``constant``: alpha, beta, gamma numbers.
    ``oseen_frank``: alpha = 1, beta = 0, gamma = sqrt(K1 cos^2 u + K3 sin^2 u).
    ``polynomial``: lists of u-polynomial coefficients for alpha, beta, gamma.
    """
    if name == "constant":
        a, b, g = (float(params.get(k, d)) for k, d in (("alpha", 1.0), ("beta", 0.0), ("gamma", 1.0)))
        return CoefficientSet.from_text(repr(a), repr(b), repr(g), bounds, domain)
    if name == "oseen_frank":
        k1, k3 = float(params["K1"]), float(params["K3"])
        if k1 <= 0 or k3 <= 0:
            raise CoefficientError("K1 and K3 must be positive")
        gamma = f"sqrt({k1!r}*cos(u)^2 + {k3!r}*sin(u)^2)"
        return CoefficientSet.from_text("1", "0", gamma, bounds, domain)
    if name == "polynomial":
        exprs = [_poly(params.get(k, [d])) for k, d in (("alpha", 1.0), ("beta", 0.0), ("gamma", 1.0))]
        return CoefficientSet.from_text(*exprs, bounds, domain)
    raise CoefficientError(f"unknown builtin family {name!r}")


BUILTINS = ("constant", "oseen_frank", "polynomial")
