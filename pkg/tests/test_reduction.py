import numpy as np
import pytest

from hypfio.errors import H1Violation, RepresentationUnavailable
from hypfio.fio import apply_symbol
from hypfio.grid import GridSpec, relative_l2, sobolev_norm
from hypfio.hypotheses import check_h1, sample_box
from hypfio.reduction import (HigherOrderProblem, check_theorem_hypotheses, principal_part, reduce,
                              solve_higher_order, triangularize_2x2)
from hypfio.reference import solve_mol
from hypfio.symbols import XI, evaluate, jb, parse

GRID = GridSpec(n_x=128, x_min=-4 * np.pi, x_max=4 * np.pi, n_t=32, t_final=0.25)
X = GRID.x


def bl(v):
    return GRID.band_limit(v)


def _close(e1, e2, grid=GRID, tol=1e-12):
    t, x, xi = sample_box(grid, 50, 5)
    return np.max(np.abs(evaluate(e1, t, x, xi) - evaluate(e2, t, x, xi))) <= tol * (1 + np.max(np.abs(xi)) ** 2)


def test_reduce_wave_form():
    p = HigherOrderProblem(2, {2: "(1+0.2*tanh(x))**2*xi**2"})
    comp = reduce(p, GRID)
    assert _close(comp.A[0, 1], jb(XI))
    assert _close(comp.A[1, 0], parse("(1+0.2*tanh(x))**2*xi**2/jb(xi)"))
    assert comp.A[0, 0].is_zero and comp.A[1, 1].is_zero
    t, x, xi = sample_box(GRID, 50, 5)
    for e in comp.B.entries.values():
        assert np.max(np.abs(evaluate(e, t, x, xi))) <= 1e-12 * GRID.xi_max


def test_reduce_order_zero_coefficient_is_triangular():
    p = HigherOrderProblem(2, {1: "(1+0.2*tanh(x))*xi", 2: "0.5*sin(x)"})
    comp = reduce(p, GRID)
    assert comp.A.is_upper_triangular()
    assert comp.A[1, 0].is_zero
    assert _close(comp.B[1, 0], parse("0.5*sin(x)/jb(xi)"))


def test_reduce_first_order():
    comp = reduce(HigherOrderProblem(1, {1: "x*xi"}), GRID)
    assert comp.m == 1 and _close(comp.A[0, 0], parse("x*xi"))


def test_from_roots_coefficients():
    p = HigherOrderProblem.from_roots(["xi", "2*xi", "-xi"])
    # (tau - l1)(tau - l2)(tau - l3): A_1 = e1, A_2 = -e2, A_3 = e3
    assert _close(p.A(1), parse("2*xi"))
    assert _close(p.A(2), parse("xi**2"))
    assert _close(p.A(3), parse("-2*xi**3"), tol=1e-12)


def test_principal_part_split():
    pp = principal_part(parse("x*xi**2 + sin(x)*xi"), 2, GRID)
    assert _close(pp, parse("x*xi**2"))
    assert principal_part(parse("sin(x)*xi"), 2, GRID).is_zero


def test_theorem_hypotheses_pass_for_factorised_operator():
    p = HigherOrderProblem.from_roots(["0", "(1+0.2*tanh(x))*xi"])
    rep = check_theorem_hypotheses(p, GRID)
    assert rep["passed"] and rep["triangular"] == "companion"
    for key in ("real_roots", "roots_order_one", "lower_order", "t_independent", "h2_passed"):
        assert rep[key], key


def test_theorem_hypotheses_crossing_distinct_derivatives():
    p = HigherOrderProblem.from_roots(["xi", "(1+tanh(x))*xi"])
    rep = check_theorem_hypotheses(p, GRID)
    assert rep["h2"][(0, 1)].label() == "pass(1)"
    assert rep["well_posedness_path"]


def test_theorem_hypotheses_h2_failure():
    rep = check_theorem_hypotheses(HigherOrderProblem.from_roots(["x*xi", "-x*xi"]), GRID)
    assert rep["h2"][(0, 1)].status == "fail"
    assert not rep["passed"]


def test_theorem_hypotheses_time_dependent_principal_part():
    rep = check_theorem_hypotheses(HigherOrderProblem.from_roots(["0", "(1+0.1*t)*xi"]), GRID)
    assert rep["well_posedness_path"] and not rep["representation_path"]


def test_triangularize_examples():
    a = parse("1+0.3*sin(t)")
    tri = triangularize_2x2(a, b1=-(-1j) * parse("0.3*cos(t)"), b2=None, b3=parse("0.2"), grid=GRID)
    assert check_h1(tri.B, GRID)["passed"]
    tri = triangularize_2x2(parse("2"), grid=GRID)
    assert tri.combination.is_zero or np.all(evaluate(tri.combination, GRID.times) == 0)
    with pytest.raises(H1Violation):
        triangularize_2x2(a, grid=GRID)


def test_triangularize_inverse_and_conjugacy():
    a = parse("1+0.3*sin(t)")
    tri = triangularize_2x2(a, strict=False, grid=GRID)
    t, x, xi = sample_box(GRID, 40, 2)
    T, Ti = tri.T.evaluate(t, x, xi), tri.T_inv.evaluate(t, x, xi)
    np.testing.assert_allclose(T @ Ti, np.broadcast_to(np.eye(2), T.shape), atol=1e-12)
    A = np.zeros_like(T)
    A[..., 0, 1] = np.sqrt(1 + xi**2)
    A[..., 1, 0] = evaluate(a, t, x, xi) ** 2 * xi**2 / np.sqrt(1 + xi**2)
    np.testing.assert_allclose(Ti @ A @ T, tri.A.evaluate(t, x, xi), atol=1e-12 * np.max(np.abs(xi)))


def _rk4(f, y, t0, t1, n):
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def test_triangularized_system_reproduces_the_equation():
    # per mode: D_t^2 u = a^2 xi^2 u + b1 xi u + b2 D_t u + b3 u with V = (<xi> u, D_t u), W = T^-1 V
    a, b1, b2, b3 = parse("1+0.3*sin(2*t)"), parse("0.4"), parse("0.25"), parse("0.1")
    tri = triangularize_2x2(a, b1, b2, b3, strict=False, grid=GRID)
    xi = 3.0
    jbx = np.sqrt(1 + xi**2)

    def orig(t, v):
        at = evaluate(a, t)
        M = np.array([[0, jbx], [(at**2 * xi**2 + 0.4 * xi + 0.1) / jbx, 0.25]])
        return 1j * M @ v

    def trian(t, w):
        M = tri.A.evaluate(t, 0.0, xi) + tri.B.evaluate(t, 0.0, xi)
        return 1j * M @ w

    v0 = np.array([1.0 + 0.5j, -0.3 + 0.2j])
    w0 = tri.T_inv.evaluate(0.0, 0.0, xi) @ v0
    v1 = _rk4(orig, v0, 0.0, 1.0, 4000)
    w1 = _rk4(trian, w0, 0.0, 1.0, 4000)
    np.testing.assert_allclose(tri.T_inv.evaluate(1.0, 0.0, xi) @ v1, w1, atol=1e-9)


def test_data_transform_norm_identity():
    p = HigherOrderProblem(3, {3: "xi**3"})
    comp = reduce(p, GRID)
    g = [bl(np.exp(-X**2) * np.cos(2 * X)), bl(np.exp(-(X - 1) ** 2)), bl(np.exp(-X**2) * np.sin(3 * X))]
    u0 = comp.transform_data(g, GRID)
    s, m = 0.5, 3
    for k in range(1, m + 1):
        lhs = sobolev_norm(u0[k - 1], s + k - 1, GRID)
        rhs = sobolev_norm(g[k - 1], s + m - 1, GRID)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_solve_zero_data():
    p = HigherOrderProblem(2, {2: "xi**2"}, data=[None, None])
    sol = solve_higher_order(p, GRID)
    assert np.all(sol.u.values == 0)


def test_companion_round_trip_constant_coefficients():
    g0, g1 = bl(np.exp(-X**2) * np.cos(3 * X)), bl(np.exp(-(X - 1) ** 2) * 1j)
    g = GridSpec(n_x=128, x_min=GRID.x_min, x_max=GRID.x_max, n_t=64, t_final=0.25)
    p = HigherOrderProblem.from_roots(["0", "xi"], data=[g0, g1])
    sol = solve_higher_order(p, g)
    assert sol.path == "companion"
    # roots 0 and xi: u_hat(t) = A + B e^{i xi t} with u_hat(0) = g0, D_t u_hat(0) = xi B = g1
    xi, t = g.xi, g.t_final
    h0, h1 = g.to_band(g0), g.to_band(g1)
    uh = h0 - h1 / xi + h1 / xi * np.exp(1j * xi * t)
    assert relative_l2(sol.u.final, g.from_band(uh)) <= 1e-6


def test_factorised_variable_coefficients_against_mol():
    g0, g1 = bl(np.exp(-X**2) * np.cos(3 * X)), bl(np.exp(-(X - 1) ** 2) * 1j)
    p = HigherOrderProblem.from_roots(["0", "(1+0.2*tanh(x))*xi"], data=[g0, g1])
    sol = solve_higher_order(p, GRID)
    comp = reduce(p, GRID)
    ref = solve_mol(comp.A, comp.B, comp.transform_data([g0, g1], GRID), None, GRID)
    u_ref = apply_symbol(parse("1/jb(xi)"), ref.components[0].final, GRID)
    assert relative_l2(sol.u.final, u_ref) <= 5e-2
    for (j, l), o in sol.chain_orders.items():
        assert o <= l - 2 + 1e-9


def test_representation_unavailable():
    p = HigherOrderProblem.from_roots(["xi", "(1+tanh(x))*xi"], data=[bl(np.exp(-X**2)), None])
    with pytest.raises(RepresentationUnavailable):
        solve_higher_order(p, GRID)
    p = HigherOrderProblem.from_roots(["0", "(1+t)*xi"], data=[bl(np.exp(-X**2)), None])
    with pytest.raises(RepresentationUnavailable):
        solve_higher_order(p, GRID)
