import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypfio.errors import DomainError, ParseError
from hypfio.symbols import (
    XI, X, T, Const, differentiate, evaluate, iterated_bracket, jb, parse,
    poisson_bracket, sin, cos, tanh,
)


def central_fd(expr, var, t, x, xi, h=1e-5):
    shift = {"t": (h, 0, 0), "x": (0, h, 0), "xi": (0, 0, h)}[var]
    plus = evaluate(expr, t + shift[0], x + shift[1], xi + shift[2])
    minus = evaluate(expr, t - shift[0], x - shift[1], xi - shift[2])
    return (plus - minus) / (2 * h)


SMOOTH_TREES = [
    "x*xi",
    "jb(xi)",
    "sin(x)*xi + cos(t)*jb(xi)",
    "(1 + 0.2*tanh(x))*xi/jb(xi)",
    "exp(-x**2)*pow(jb(xi), -1) + t*x",
    "abs_smooth(xi)*(2 + sin(3*x))",
]


def test_eval_examples():
    assert evaluate(jb(XI), 0, 0, 0) == pytest.approx(1.0)
    assert evaluate(X * XI, 0, 2, 3) == pytest.approx(6.0)
    assert evaluate(jb(XI), 0, 0, np.sqrt(3)) == pytest.approx(2.0)


def test_eval_domain_error():
    with pytest.raises(DomainError):
        evaluate(Const(1) / X, 0, 0.0, 1.0)
    with pytest.raises(DomainError):
        evaluate(parse("pow(x, -2)"), 0, np.array([0.0, 1.0]), 1.0)


def test_differentiate_examples():
    pts = np.random.default_rng(1).uniform(-2, 2, (3, 20))
    t, x, xi = pts
    np.testing.assert_allclose(evaluate(differentiate(X * XI, "xi"), t, x, xi), x)
    np.testing.assert_allclose(evaluate(differentiate(jb(XI), "xi"), t, x, xi), xi / np.sqrt(1 + xi**2))
    np.testing.assert_allclose(evaluate(differentiate(sin(X) * XI, "x"), t, x, xi), np.cos(x) * xi)


@pytest.mark.parametrize("text", SMOOTH_TREES)
@pytest.mark.parametrize("var", ["t", "x", "xi"])
def test_differentiate_matches_finite_differences(text, var):
    expr = parse(text)
    t, x, xi = np.random.default_rng(7).uniform(-1.5, 1.5, (3, 20))
    exact = evaluate(differentiate(expr, var), t, x, xi)
    fd = central_fd(expr, var, t, x, xi)
    scale = np.maximum(np.abs(exact), 1.0)
    assert np.max(np.abs(exact - fd) / scale) <= 1e-6


def test_bracket_examples():
    t, x, xi = np.random.default_rng(3).uniform(-3, 3, (3, 10))
    f = X * XI
    np.testing.assert_allclose(evaluate(poisson_bracket(f, XI), t, x, xi), -xi)
    np.testing.assert_allclose(evaluate(poisson_bracket(XI, f), t, x, xi), xi)
    assert np.max(np.abs(evaluate(poisson_bracket(f, -f), t, x, xi))) == 0.0


def test_bracket_matches_fd_oracle():
    f, g = XI, X * XI
    t, x, xi = np.random.default_rng(4).uniform(-2, 2, (3, 10))
    fd = (central_fd(f, "xi", t, x, xi) * central_fd(g, "x", t, x, xi)
          - central_fd(f, "x", t, x, xi) * central_fd(g, "xi", t, x, xi))
    np.testing.assert_allclose(evaluate(poisson_bracket(f, g), t, x, xi), fd, atol=1e-8)


def test_iterated_bracket_examples():
    t, x, xi = np.random.default_rng(5).uniform(-2, 2, (3, 10))
    np.testing.assert_allclose(evaluate(iterated_bracket(XI, X * XI, 1), t, x, xi), xi)
    assert np.all(evaluate(iterated_bracket(X * XI, -(X * XI), 2), t, x, xi) == 0)
    lam = tanh(X) * XI
    assert np.all(np.abs(evaluate(iterated_bracket(lam, lam, 1), t, x, xi)) < 1e-14)
    with pytest.raises(ValueError):
        iterated_bracket(XI, XI, 0)


coeffs = st.sampled_from(["1 + 0.2*tanh(x)", "2 + sin(x)", "x", "1 + 0.1*cos(2*x)", "exp(-x**2)"])


@settings(max_examples=25, deadline=None)
@given(coeffs, coeffs, coeffs, st.integers(0, 2**16))
def test_bracket_properties(a, b, c, seed):
    f = parse(a) * XI
    g = parse(b) * jb(XI)
    h = parse(c) + XI * XI
    t, x, xi = np.random.default_rng(seed).uniform(-2, 2, (3, 100))
    anti = evaluate(poisson_bracket(f, g) + poisson_bracket(g, f), t, x, xi)
    assert np.max(np.abs(anti)) <= 1e-10
    leib = (poisson_bracket(f, g * h) - g * poisson_bracket(f, h) - poisson_bracket(f, g) * h)
    assert np.max(np.abs(evaluate(leib, t, x, xi))) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(coeffs, coeffs)
def test_bracket_homogeneity(a, b):
    li, lj = parse(a) * XI, parse(b) * XI
    br = poisson_bracket(li, lj)
    x = np.linspace(-2, 2, 11)
    xi = np.linspace(0.5, 3, 11)
    base = evaluate(br, 0, x, xi)
    for s in (2, 4, 8):
        scaled = evaluate(br, 0, x, s * xi)
        np.testing.assert_allclose(scaled, s * base, rtol=1e-10, atol=1e-300)


@pytest.mark.parametrize("text", SMOOTH_TREES + ["pow(jb(xi), -3)", "x - (-2)", "(1+2j)*xi"])
def test_parse_roundtrip(text):
    e = parse(text)
    assert parse(str(e)) == e


@pytest.mark.parametrize("bad", ["foo(x)", "x**0.5", "y + 1", "x +", "jb(x, xi)", "'a'"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse(bad)


def test_data_functions_gated():
    with pytest.raises(ParseError):
        parse("heaviside(x)")
    h = parse("heaviside(x)", allow_data_functions=True)
    np.testing.assert_allclose(evaluate(h, 0, np.array([-1.0, 1.0]), 0).real, [0, 1])
    with pytest.raises(ValueError):
        differentiate(h, "x")


def test_constant_folding_and_order_tag():
    assert str(Const(2) * Const(3)) == "6"
    assert (XI * 0).is_zero
    tagged = jb(XI).with_order(1)
    assert tagged.declared_order == 1 and tagged == jb(XI)
    assert not (T * X).depends_on("xi")
