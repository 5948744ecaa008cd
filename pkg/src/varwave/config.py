"""YAML run configuration with line-referenced validation errors.

Layout::

    coefficients:            # either alpha/beta/gamma expressions ...
      alpha: "1"
      beta: "0"
      gamma: "sqrt(2 + sin(u))"
      # builtin: oseen_frank  ... or a named family with params
      # params: {K1: 1.0, K3: 2.0}
      bounds: {alpha1: 1, alpha2: 1, beta2: 0, gamma1: 1, gamma2: 1.7320508075688772}
      domain: [-10, 10, -5, 5]          # optional
    data:                    # u0/u1 expressions with support radius L, or csv: path
      u0: "0.8*tanh(x/0.1)"
      u1: "0"
      L: 1.0
    data_b: {...}            # second data set for metric / compare
    grid: {delta: 0.0078125, T: 1.6, box: 1.0}
    weights: {delta: 0.1}    # or kappa: [7 numbers], custom: true
    options: {taus: [0, 0.5], n_theta: 8, refine: 3}
    output: out
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import yaml

from .coeffx import BUILTINS, Bounds, CoefficientError, CoefficientSet, builtin
from .expr import ExprSyntaxError
from .goursat import config_hash
from .initdata import InitialData, InitialDataError, read_samples_csv
from .metric import MetricWeights

OPTION_DEFAULTS = {
    "taus": None,
    "n_theta": 8,
    "iters": 3,
    "eps_sing": 1e-3,
    "refine": 3,
    "seed": 0,
    "backend": None,
    "n_tau": 11,
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    coefficients: CoefficientSet
    data: InitialData
    delta: float
    T: float
    box: float
    weights: MetricWeights
    options: dict
    output: str
    data_b: InitialData | None = None
    raw: dict = field(default_factory=dict)
    source: str | None = None

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def tau_grid(self):
        taus = self.options.get("taus")
        if taus is not None:
            return [float(t) for t in taus]
        n = int(self.options["n_tau"])
        return [self.T * k / (n - 1) for k in range(n)]


def _to_python(node, path, lines):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for kn, vn in node.value:
            key = kn.value
            out[key] = _to_python(vn, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, path + (n,), lines) for n, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


class _Checker:
    def __init__(self, lines):
        self.lines = lines
        self.errors = []

    def line(self, path):
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path, 1)

    def err(self, path, msg):
        name = ".".join(str(p) for p in path) or "<root>"
        self.errors.append(f"line {self.line(path)}: {name}: {msg}")

    def need(self, block, path, key):
        if not isinstance(block, dict) or key not in block:
            self.err(path + (key,), "missing key")
            return None
        return block[key]

    def number(self, block, path, key, positive=False, default=None):
        if not isinstance(block, dict) or key not in block:
            if default is not None:
                return float(default)
            self.err(path + (key,), "missing key")
            return None
        v = block[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.err(path + (key,), f"expected a number, got {type(v).__name__}")
            return None
        v = float(v)
        if not math.isfinite(v):
            self.err(path + (key,), "must be finite")
            return None
        if positive and v <= 0:
            self.err(path + (key,), f"must be positive, got {v!r}")
            return None
        return v


def _coefficients(ck, blk):
    p = ("coefficients",)
    if not isinstance(blk, dict):
        ck.err(p, "missing block")
        return None
    bnd = ck.need(blk, p, "bounds")
    bounds = None
    if bnd is not None:
        vals = {k: ck.number(bnd, p + ("bounds",), k) for k in ("alpha1", "alpha2", "beta2", "gamma1", "gamma2")}
        if None not in vals.values():
            try:
                bounds = Bounds(**vals)
            except CoefficientError as exc:
                ck.err(p + ("bounds",), str(exc))
    domain = blk.get("domain")
    if domain is not None:
        if not (isinstance(domain, list) and len(domain) == 4 and all(isinstance(v, (int, float)) for v in domain)):
            ck.err(p + ("domain",), "expected [x_lo, x_hi, u_lo, u_hi]")
            domain = None
        elif not (domain[0] < domain[1] and domain[2] < domain[3]):
            ck.err(p + ("domain",), "need x_lo < x_hi and u_lo < u_hi")
            domain = None
    if "builtin" in blk:
        name = blk["builtin"]
        if name not in BUILTINS:
            ck.err(p + ("builtin",), f"unknown family {name!r}; choose from {', '.join(BUILTINS)}")
            return None
        if bounds is None:
            return None
        try:
            return builtin(name, blk.get("params") or {}, bounds, domain)
        except (CoefficientError, KeyError, ExprSyntaxError, TypeError, ValueError) as exc:
            ck.err(p + ("params",), f"bad parameters: {exc}")
            return None
    exprs = {}
    for k in ("alpha", "beta", "gamma"):
        v = ck.need(blk, p, k)
        if v is not None:
            if isinstance(v, bool) or not isinstance(v, (str, int, float)):
                ck.err(p + (k,), "expected an expression string")
            else:
                exprs[k] = str(v)
    if len(exprs) < 3 or bounds is None:
        return None
    try:
        return CoefficientSet.from_text(exprs["alpha"], exprs["beta"], exprs["gamma"], bounds, domain)
    except (ExprSyntaxError, CoefficientError) as exc:
        ck.err(p, str(exc))
        return None


def _data(ck, blk, key, base_dir):
    p = (key,)
    if not isinstance(blk, dict):
        ck.err(p, "missing block")
        return None
    try:
        if "csv" in blk:
            path = blk["csv"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            return read_samples_csv(path)
        u0 = ck.need(blk, p, "u0")
        u1 = blk.get("u1", "0")
        L = ck.number(blk, p, "L", positive=True)
        if u0 is None or L is None:
            return None
        return InitialData.from_text(str(u0), str(u1), L)
    except (ExprSyntaxError, InitialDataError, OSError) as exc:
        ck.err(p, str(exc))
        return None


def _weights(ck, blk):
    p = ("weights",)
    blk = blk or {}
    try:
        if "kappa" in blk:
            k = blk["kappa"]
            if not (isinstance(k, list) and len(k) == 7):
                ck.err(p + ("kappa",), "expected a list of 7 numbers")
                return None
            return MetricWeights(tuple(float(v) for v in k), float(blk.get("delta", 0.1)),
                                 custom=bool(blk.get("custom", False)))
        d = ck.number(blk, p, "delta", positive=True, default=0.1)
        return None if d is None else MetricWeights.default(d)
    except (TypeError, ValueError) as exc:
        ck.err(p, str(exc))
        return None


def parse_config_text(text: str, source: str | None = None, base_dir: str = ".") -> RunConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        ln = mark.line + 1 if mark is not None else 1
        raise ConfigError([f"line {ln}: YAML syntax error: {getattr(exc, 'problem', exc)}"])
    if node is None or not isinstance(node, yaml.MappingNode):
        raise ConfigError(["line 1: <root>: expected a mapping of sections"])
    lines = {}
    raw = _to_python(node, (), lines)
    ck = _Checker(lines)
    cs = _coefficients(ck, raw.get("coefficients"))
    data = _data(ck, raw.get("data"), "data", base_dir)
    data_b = _data(ck, raw["data_b"], "data_b", base_dir) if "data_b" in raw else None
    grid = raw.get("grid")
    delta = T = box = None
    if not isinstance(grid, dict):
        ck.err(("grid",), "missing block")
    else:
        delta = ck.number(grid, ("grid",), "delta", positive=True)
        T = ck.number(grid, ("grid",), "T", positive=True)
        if "box" in grid:
            box = ck.number(grid, ("grid",), "box", positive=True)
    weights = _weights(ck, raw.get("weights"))
    opts = dict(OPTION_DEFAULTS)
    user = raw.get("options") or {}
    if not isinstance(user, dict):
        ck.err(("options",), "expected a mapping")
        user = {}
    for k, v in user.items():
        if k not in OPTION_DEFAULTS:
            ck.err(("options", k), f"unknown option; known: {', '.join(sorted(OPTION_DEFAULTS))}")
            continue
        opts[k] = v
    for k in ("n_theta", "iters", "refine", "n_tau"):
        v = opts[k]
        if isinstance(v, bool) or not isinstance(v, int) or v < (2 if k in ("n_theta", "n_tau", "refine") else 1):
            ck.err(("options", k), f"expected an integer >= {2 if k != 'iters' else 1}")
    if opts["taus"] is not None:
        t = opts["taus"]
        if not (isinstance(t, list) and t and all(isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0
                                                  for v in t)):
            ck.err(("options", "taus"), "expected a non-empty list of non-negative numbers")
    if opts["n_theta"] % 2 if isinstance(opts["n_theta"], int) else False:
        ck.err(("options", "n_theta"), "must be even (Simpson rule in theta)")
    if opts["backend"] not in (None, "compiled", "numpy"):
        ck.err(("options", "backend"), "expected compiled or numpy")
    out = raw.get("output", "out")
    if not isinstance(out, str):
        ck.err(("output",), "expected a directory path")
    if ck.errors:
        raise ConfigError(ck.errors)
    if box is None:
        box = data.L
    return RunConfig(cs, data, delta, T, box, weights, opts, out, data_b, raw, source)


def parse_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"line 0: <file>: cannot read {path}: {exc.strerror}"])
    return parse_config_text(text, str(path), os.path.dirname(os.path.abspath(path)))
