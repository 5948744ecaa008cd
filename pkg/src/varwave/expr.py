"""Coefficient expressions over the variables ``x`` and ``u``.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' exponent)?
    exponent:= ['-'] (number | '(' const-expr ')')
    atom    := number | 'x' | 'u' | 'pi' | func '(' expr ')' | '(' expr ')'
    func    := 'sin' | 'cos' | 'exp' | 'sqrt' | 'tanh'

Exponents must be constant.  ``^`` binds tighter than unary minus, so
``-u^2`` is ``-(u^2)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "tanh")
VARIABLES = ("x", "u")


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}: {text!r}")


class ExprDomainError(ArithmeticError):
    """Raised when an expression is evaluated outside its domain."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            raise ExprSyntaxError(f"expected {value!r}", self.text, tok[2])
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected token {tok[1]!r}", self.text, tok[2])
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.unary())
        if self.peek()[1] == "+" and self.peek()[0] == "op":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            tok = self.take()
            sign = 1.0
            while self.peek()[1] in ("-", "+") and self.peek()[0] == "op":
                if self.take()[1] == "-":
                    sign = -sign
            start = self.peek()[2]
            ex = self.atom()
            if free_variables(ex):
                raise ExprSyntaxError("exponent must be constant", self.text, start)
            try:
                val = sign * float(evaluate(ex, 0.0, 0.0))
            except ExprDomainError:
                raise ExprSyntaxError("exponent is not a finite constant", self.text, tok[2])
            return Pow(base, val)
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in VARIABLES:
                return Var(val)
            if val == "pi":
                return Num(math.pi)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise ExprSyntaxError(f"unknown identifier {val!r}", self.text, pos)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", self.text, pos)
        raise ExprSyntaxError(f"unexpected token {val!r}", self.text, pos)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", str(text), 0)
    return _Parser(text).parse()


def free_variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg, Call)):
        return free_variables(e.arg)
    if isinstance(e, Pow):
        return free_variables(e.base)
    return free_variables(e.left) | free_variables(e.right)


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_text(e: Expr) -> str:
    """Render with minimal parentheses; ``parse_expr(to_text(e)) == e``."""
    return _render(e, 0)


def _render(e: Expr, ctx: int) -> str:
    # ctx is the binding strength demanded by the parent: 0 free, 1-3 operand
    # of an additive/multiplicative operator, 5 base of a power.
    if isinstance(e, Num):
        if e.value < 0:
            return f"(-{_fmt_num(-e.value)})"
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({_render(e.arg, 0)})"
    if isinstance(e, Pow):
        ex = _fmt_num(e.exponent)
        if e.exponent < 0:
            ex = f"({ex})"
        s = f"{_render(e.base, 5)}^{ex}"
        return f"({s})" if ctx >= 5 else s
    if isinstance(e, Neg):
        s = "-" + _render(e.arg, 4)
        return f"({s})" if ctx >= 1 else s
    prec = _PREC[e.op]
    s = f"{_render(e.left, prec)} {e.op} {_render(e.right, prec + 1)}"
    return f"({s})" if ctx > prec else s


_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
}


def evaluate(e: Expr, x, u):
    """Plain evaluation; ``x`` and ``u`` may be floats or numpy arrays."""
    with np.errstate(all="ignore"):
        val = _eval(e, x, u)
    arr = np.asarray(val, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ExprDomainError(f"non-finite value of {to_text(e)}")
    return val


def _eval(e, x, u):
    if isinstance(e, Num):
        return e.value + 0.0 * np.asarray(x) if np.ndim(x) else e.value
    if isinstance(e, Var):
        return x if e.name == "x" else u
    if isinstance(e, Neg):
        return -_eval(e.arg, x, u)
    if isinstance(e, Call):
        a = _eval(e.arg, x, u)
        if e.fn == "sqrt" and np.any(np.asarray(a) < 0):
            raise ExprDomainError("sqrt of a negative number")
        return _UNARY[e.fn](a)
    if isinstance(e, Pow):
        return np.power(_eval(e.base, x, u), e.exponent)
    a = _eval(e.left, x, u)
    b = _eval(e.right, x, u)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if np.any(np.asarray(b) == 0):
        raise ExprDomainError("division by zero")
    return a / b


def is_constant(e: Expr) -> bool:
    return not free_variables(e)


# Opcodes shared with the compiled kernel.
OP_CONST, OP_X, OP_U, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG, OP_POW = range(9)
OP_SIN, OP_COS, OP_EXP, OP_SQRT, OP_TANH = range(9, 14)
_FN_OP = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "sqrt": OP_SQRT, "tanh": OP_TANH}


def compile_tape(e: Expr):
    """Flatten ``e`` into a register tape.

    Returns ``(ops, args, consts)``: instruction ``n`` writes slot ``n``;
    ``args[n]`` holds operand slot indices.  The last slot is the result.
    """
    ops, args, consts = [], [], []

    def emit(op, a=-1, b=-1, c=0.0):
        ops.append(op)
        args.append((a, b))
        consts.append(c)
        return len(ops) - 1

    def walk(node):
        if isinstance(node, Num):
            return emit(OP_CONST, c=node.value)
        if isinstance(node, Var):
            return emit(OP_X if node.name == "x" else OP_U)
        if isinstance(node, Neg):
            return emit(OP_NEG, walk(node.arg))
        if isinstance(node, Call):
            return emit(_FN_OP[node.fn], walk(node.arg))
        if isinstance(node, Pow):
            return emit(OP_POW, walk(node.base), c=node.exponent)
        a = walk(node.left)
        b = walk(node.right)
        return emit({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}[node.op], a, b)

    walk(e)
    return (
        np.asarray(ops, dtype=np.int32),
        np.asarray(args, dtype=np.int32).reshape(-1, 2),
        np.asarray(consts, dtype=np.float64),
    )
