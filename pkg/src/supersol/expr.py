"""Arithmetic expressions for coefficient functions.

Grammar (``^`` binds tighter than unary minus, and is right associative)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Variables are ``x``, ``y``, ``d`` (unsigned distance to the boundary) and
``u``. Evaluation is vectorised over numpy arrays and raises
:class:`DomainError` instead of producing NaN.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnboundVariable

VARIABLES = ("x", "y", "d", "u")
FUNCTIONS = {
    "sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1,
    "min": None, "max": None,
}


class Expr:
    __slots__ = ()

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    while True:
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos >= len(source):
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos + 1)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(("end", "", len(source) + 1))
    return tokens


class _Parser:
    def __init__(self, source):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, text, offset = self.peek()
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {what}", offset, expected)

    def expect(self, text):
        if self.peek()[1] != text or self.peek()[0] != "op":
            self.fail({text})
        self.advance()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail({"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, offset = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "ident":
            self.advance()
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", offset, FUNCTIONS)
                self.advance()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[text]
                if arity is not None and len(args) != arity:
                    raise ExprSyntaxError(f"{text} takes {arity} argument(s), got {len(args)}", offset)
                return Call(text, tuple(args))
            if text not in VARIABLES:
                raise ExprSyntaxError(f"unknown variable {text!r}", offset, VARIABLES)
            return Var(text)
        if (kind, text) == ("op", "("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.fail({"number", "variable", "function", "(", "-"})


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    >>> parse("2*x+1")
    BinOp(op='+', left=BinOp(op='*', left=Num(value=2.0), right=Var(name='x')), right=Num(value=1.0))
    """
    return _Parser(source).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Num) and e.value < 0:
        return 3
    return 5


def to_source(e: Expr) -> str:
    """Render with the minimum parentheses needed to parse back to ``e``."""

    def wrap(child, needs):
        text = to_source(child)
        return f"({text})" if needs else text

    if isinstance(e, Num):
        v = float(e.value)
        text = str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
        return f"({text})" if e.value < 0 else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + wrap(e.operand, _prec(e.operand) < 3)
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_source(a) for a in e.args)})"
    p = _PREC[e.op]
    if e.op == "^":
        return f"{wrap(e.left, _prec(e.left) <= 4)}^{wrap(e.right, _prec(e.right) < 3)}"
    return f"{wrap(e.left, _prec(e.left) < p)} {e.op} {wrap(e.right, _prec(e.right) <= p)}"


def free_variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    return set().union(*(free_variables(a) for a in e.args))


def _checked(value, what):
    if np.any(np.isnan(value)):
        raise DomainError(f"{what} produced an undefined value")
    return value


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "+":
            return _checked(a + b, "addition")
        if e.op == "-":
            return _checked(a - b, "subtraction")
        if e.op == "*":
            return _checked(a * b, "multiplication")
        if e.op == "/":
            if np.any(np.asarray(b) == 0):
                raise DomainError("division by zero")
            return _checked(a / b, "division")
        base = np.asarray(a, dtype=float)
        if np.any((base == 0) & (np.asarray(b) < 0)):
            raise DomainError("zero raised to a negative power")
        return _checked(np.power(base, b), "power")
    args = [_eval(a, env) for a in e.args]
    name = e.name
    if name == "log":
        if np.any(np.asarray(args[0]) <= 0):
            raise DomainError("log of a non-positive number")
        return np.log(args[0])
    if name == "sqrt":
        if np.any(np.asarray(args[0]) < 0):
            raise DomainError("sqrt of a negative number")
        return np.sqrt(args[0])
    if name == "min":
        return _reduce(np.minimum, args)
    if name == "max":
        return _reduce(np.maximum, args)
    fn = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[name]
    return _checked(fn(args[0]), name)


def _reduce(fn, args):
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


def evaluate(e: Expr, bindings=None, **kw):
    """Evaluate ``e`` with IEEE double arithmetic.

    Bindings may be floats or equally-shaped numpy arrays. Scalar inputs
    give a float back; overflow yields ``inf`` rather than an error.
    """
    env = dict(bindings or {}, **kw)
    arrays = [v for v in env.values() if np.ndim(v) > 0]
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    if arrays:
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(arrays[0])).copy()
    return float(out)


def derivative_u(e: Expr, bindings=None, **kw):
    """Centered finite-difference derivative in ``u``, step 1e-6*max(1, |u|)."""
    env = dict(bindings or {}, **kw)
    u = np.asarray(env["u"], dtype=float)
    step = 1e-6 * np.maximum(1.0, np.abs(u))
    hi = evaluate(e, env, u=u + step)
    lo = evaluate(e, env, u=u - step)
    with np.errstate(invalid="ignore"):
        out = (hi - lo) / (2 * step)
    out = _checked(out, "derivative")
    return float(out) if np.ndim(env["u"]) == 0 else out
