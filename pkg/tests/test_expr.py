import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supersol.errors import DomainError, ExprSyntaxError, UnboundVariable
from supersol.expr import BinOp, Call, Neg, Num, Var, derivative_u, evaluate, free_variables, parse, to_source


def test_precedence():
    assert parse("2*x+1") == BinOp("+", BinOp("*", Num(2.0), Var("x")), Num(1.0))
    assert parse("u^2") == BinOp("^", Var("u"), Num(2.0))


@pytest.mark.parametrize("src,value", [
    ("1-2-3", -4.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("2^-1", 0.5),
    ("8/4/2", 1.0),
    ("--3", 3.0),
    ("2*(3+4)", 14.0),
    ("max(1, 5, 3) - min(2, -1)", 6.0),
    ("abs(-3) + sqrt(16) + exp(0) + log(1)", 8.0),
    ("1.5e1 + .5", 15.5),
])
def test_arithmetic(src, value):
    assert evaluate(parse(src)) == value


def test_unbalanced_paren_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("d*(1-d")
    assert info.value.offset == 7
    assert ")" in info.value.expected


@pytest.mark.parametrize("src,offset", [("u^^2", 3), ("1 +", 4), ("x $ 2", 3), ("foo(x)", 1), ("z + 1", 1),
                                        ("sin(x, y)", 1), ("(x))", 4)])
def test_syntax_error_offsets(src, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(src)
    assert info.value.offset == offset


def test_eval_examples():
    assert evaluate(parse("x*(1-x)"), x=0.5) == 0.25
    assert evaluate(parse("u^2"), u=3) == 9
    with pytest.raises(DomainError):
        evaluate(parse("1/d"), d=0.0)


@pytest.mark.parametrize("src,env", [
    ("log(x)", {"x": 0.0}),
    ("log(x)", {"x": -1.0}),
    ("sqrt(x)", {"x": -1e-9}),
    ("x^0.5", {"x": -2.0}),
    ("d^-1", {"d": 0.0}),
    ("exp(x) - exp(x)", {"x": 1000.0}),
])
def test_domain_errors(src, env):
    with pytest.raises(DomainError):
        evaluate(parse(src), env)


def test_sqrt_zero_and_overflow_are_ieee():
    assert evaluate(parse("sqrt(d)"), d=0.0) == 0.0
    assert evaluate(parse("exp(u)"), u=1000.0) == math.inf


def test_unbound():
    with pytest.raises(UnboundVariable):
        evaluate(parse("x + u"), x=1.0)


def test_vectorised_matches_scalar():
    e = parse("sin(3*x)*y + d^2 - max(x, y)")
    rng = np.random.default_rng(0)
    x, y, d = rng.uniform(size=(3, 50))
    vec = evaluate(e, x=x, y=y, d=d)
    assert vec.shape == (50,)
    assert np.array_equal(vec, [evaluate(e, x=a, y=b, d=c) for a, b, c in zip(x, y, d)])
    assert evaluate(parse("1"), x=x).shape == (50,)


def test_free_variables():
    assert free_variables(parse("x*sin(u) + 2")) == {"x", "u"}


@pytest.mark.parametrize("src,deriv", [
    ("u^2", lambda u: 2 * u),
    ("u^3 + 2*u", lambda u: 3 * u ** 2 + 2),
    ("4*u^5 - u", lambda u: 20 * u ** 4 - 1),
])
def test_finite_difference_derivative(src, deriv):
    e = parse(src)
    for u in (0.3, 1.0, 2.5, 17.0):
        assert derivative_u(e, u=u) == pytest.approx(deriv(u), rel=1e-8)


# random well-formed sources for the round trip
_atoms = st.one_of(st.sampled_from(["x", "y", "d", "u"]),
                   st.integers(0, 99).map(str),
                   st.floats(0, 1e3, allow_nan=False).map(repr))


def _combine(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda t: f"{t[0]} {t[1]} {t[2]}")
    return st.one_of(
        binary,
        children.map(lambda c: f"({c})"),
        children.map(lambda c: f"-{c}"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "abs"]), children).map(
            lambda t: f"{t[0]}({t[1]})"),
        st.lists(children, min_size=1, max_size=3).map(lambda cs: f"max({', '.join(cs)})"),
    )


sources = st.recursive(_atoms, _combine, max_leaves=12)


@given(sources)
@settings(max_examples=300)
def test_print_parse_round_trip(src):
    tree = parse(src)
    assert parse(to_source(tree)) == tree


def test_round_trip_keeps_associativity():
    for src in ["1-(2-3)", "(1-2)-3", "(2^3)^2", "2^3^2", "(-2)^2", "-(2^2)", "2^(-1)", "x/(y*d)"]:
        tree = parse(src)
        assert parse(to_source(tree)) == tree
    assert isinstance(parse("(-2)^2").left, Neg)
    assert isinstance(parse("max(1,2)"), Call)
