import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypfio.grid import GridSpec
from hypfio.hypotheses import SymbolMatrix, check_h1, check_h2, estimate_order, symbol_order
from hypfio.symbols import XI, X, jb, parse

GRID = GridSpec(n_x=64, x_min=-4.0, x_max=4.0, n_t=8, t_final=0.5)


def test_h1_examples():
    rep = check_h1(SymbolMatrix(2, {(1, 0): 1 / jb(XI)}), GRID)
    assert rep["passed"] and rep[(1, 0)].slope == pytest.approx(-1, abs=0.02)
    rep = check_h1(SymbolMatrix(2, {(1, 0): parse("1")}), GRID)
    assert not rep["passed"] and rep[(1, 0)].slope == pytest.approx(0, abs=1e-9)
    rep = check_h1(SymbolMatrix(2, {(0, 1): XI / jb(XI)}), GRID)
    assert rep["passed"] and rep[(0, 1)].slope == pytest.approx(0, abs=0.01)


def test_h1_three_by_three_orders():
    B = SymbolMatrix(3, {(2, 0): jb(XI) ** -2, (2, 1): jb(XI) ** -1, (1, 0): parse("x")/jb(XI) + 0})
    assert check_h1(B, GRID)["passed"]
    B = SymbolMatrix(3, {(2, 0): jb(XI) ** -1})
    assert not check_h1(B, GRID)["passed"]


def test_h2_examples():
    rep = check_h2([XI, X * XI], GRID)
    pair = rep[(0, 1)]
    assert pair.label() == "pass(1)"
    assert len(pair.witnesses) == 1 and abs(pair.witnesses[0] - 1) <= 1e-6
    rep = check_h2([X * XI, -(X * XI)], GRID)
    assert rep[(0, 1)].label() == "fail(4)" and not rep["passed"]
    rep = check_h2([XI, XI], GRID)
    assert rep[(0, 1)].status == "identical"
    rep = check_h2([XI, 2 * XI], GRID)
    assert rep[(0, 1)].status == "disjoint"


def test_h2_witnesses_are_multiplicity_points():
    lams = [parse("1 + 0.3*sin(x)") * XI, parse("1 + 0.2*tanh(x)") * XI]
    rep = check_h2(lams, GRID)
    pair = rep[(0, 1)]
    assert pair.witnesses
    for w in pair.witnesses:
        diff = abs(lams[0](0, w, 1.0) - lams[1](0, w, 1.0))
        assert diff <= 1e-8 * 3


bump = st.floats(-0.3, 0.3).filter(lambda v: abs(v) > 0.02)


@settings(max_examples=20, deadline=None)
@given(bump, bump, st.floats(-2, 2))
def test_h2_distinct_derivatives_pass_one(c1, c2, x0):
    # a_1 - a_2 = (c1 - c2) * tanh(x - x0) crosses once at x0 with distinct slopes
    if abs(c1 - c2) < 0.02:
        return
    a1 = parse(f"1 + {c1}*tanh(x - {x0})")
    a2 = parse(f"1 + {c2}*tanh(x - {x0})")
    rep = check_h2([a1 * XI, a2 * XI], GRID)
    assert rep[(0, 1)].label() == "pass(1)"


def test_order_estimation():
    assert estimate_order(XI * jb(XI)) == pytest.approx(2, abs=0.01)
    assert symbol_order(jb(XI) ** -1) == -1
    assert symbol_order(parse("x").with_order(3)) == 3
    assert symbol_order(parse("0")) == -np.inf


def test_symbol_matrix_invariants():
    with pytest.raises(ValueError):
        SymbolMatrix(2, {(1, 0): XI}, kind="principal")
    A = SymbolMatrix.from_rows([["xi", "0.5*jb(xi)"], ["0", "2*xi"]], kind="principal")
    assert A.is_upper_triangular() and A.check_real_diagonal(GRID) <= 1e-12
    vals = A.evaluate(0.0, np.zeros(3), np.array([1.0, 2.0, 3.0]))
    assert vals.shape == (3, 2, 2)
    assert vals[1, 1, 1] == 4
