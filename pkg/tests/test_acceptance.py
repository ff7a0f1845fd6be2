"""Acceptance criteria 1-8; each test prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from hypfio.errors import H1Violation
from hypfio.fio import apply_g0, make_kernel
from hypfio.grid import GridSpec, relative_l2, sobolev_norm
from hypfio.hypotheses import SymbolMatrix, check_h1, check_h2
from hypfio.parametrix import solve_2x2
from hypfio.reduction import HigherOrderProblem, solve_higher_order, triangularize_2x2
from hypfio.reference import solve_constant_coeff, solve_mol
from hypfio.symbols import XI, X as XSYM, jb, parse
from hypfio.wavefront import propagate_wavefront, seed_wavefront, verify_prediction

A_CONST = SymbolMatrix.from_rows([["xi", "0.5*jb(xi)"], ["0", "2*xi"]])
A_VAR = SymbolMatrix.from_rows([["(1+0.2*tanh(x))*xi", "0.5*jb(xi)"], ["0", "2*(1+0.1*sin(x))*xi"]])
B = SymbolMatrix.from_rows([["0", "0"], ["0.3/jb(xi)", "0"]])


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return _report


def packets(g):
    x = g.x
    return [g.band_limit(np.exp(-x**2 / 2) * np.exp(8j * x)),
            g.band_limit(np.exp(-(x - 1) ** 2 / 2) * np.exp(-6j * x))]


def test_criterion_1_constant_coefficient_oracle(report):
    g = GridSpec(n_x=256, n_xi=256, n_t=64, t_final=0.25)
    u0 = packets(g)
    t0 = time.process_time()
    b = solve_2x2(A_CONST, B, u0, None, g, M=8)
    elapsed = time.process_time() - t0
    err = relative_l2(b.final(), solve_constant_coeff(A_CONST, B, u0, None, g).final())
    report(1, err <= 1e-3 and elapsed <= 10, f"rel L2 {err:.2e} (<= 1e-3), {elapsed:.1f} s (<= 10 s)")


def test_criterion_2_variable_coefficient_accuracy(report):
    errs = {}
    for T, n_t in ((0.25, 64), (0.125, 32)):
        g = GridSpec(n_x=256, n_t=n_t, t_final=T)
        u0 = packets(g)
        b = solve_2x2(A_VAR, B, u0, None, g, M=8)
        errs[T] = relative_l2(b.final(), solve_mol(A_VAR, B, u0, None, g).final())
    ok = errs[0.25] <= 5e-2 and errs[0.125] <= 0.6 * errs[0.25]
    report(2, ok, f"err(T=0.25) {errs[0.25]:.2e} (<= 5e-2), err(T=0.125) {errs[0.125]:.2e} "
                  f"(ratio {errs[0.125] / errs[0.25]:.3f} <= 0.6)")


def test_criterion_3_neumann_residual_decay(report):
    g = GridSpec(n_x=256, n_t=64, t_final=0.25)
    u0 = packets(g)
    d4 = solve_2x2(A_CONST, B, u0, None, g, M=4).diagnostics
    d8 = solve_2x2(A_CONST, B, u0, None, g, M=8).diagnostics
    q = max(d8["q_hat"])
    ratio = max(r8 / r4 for r4, r8 in zip(d4["neumann_residual"], d8["neumann_residual"]))
    gh = GridSpec(n_x=256, n_t=32, t_final=0.125)
    qh = max(solve_2x2(A_CONST, B, packets(gh), None, gh, M=8).diagnostics["q_hat"])
    ok = ratio <= q**4 and qh <= 0.6 * q
    report(3, ok, f"residual ratio M 4->8 {ratio:.2e} (<= q^4 = {q**4:.2e}), "
                  f"q(T/2)/q(T) {qh / q:.3f} (<= 0.6)")


def test_criterion_4_anisotropic_mapping(report):
    g = GridSpec(n_x=256, x_min=-np.pi, x_max=np.pi, n_t=32, t_final=0.25)
    x = g.x
    norms = []
    for k0 in (8, 16, 32, 64):
        u1 = g.band_limit(np.exp(-2 * x**2) * np.exp(1j * k0 * x))
        u2 = g.band_limit(np.exp(-2 * (x - 0.5) ** 2) * np.exp(-1j * k0 * x))
        u1, u2 = u1 / sobolev_norm(u1, 0.0, g), u2 / sobolev_norm(u2, 1.0, g)
        b = solve_2x2(A_VAR, B, [u1, u2], None, g, M=8)
        norms.append([sobolev_norm(b.components[0].final, 0.0, g), sobolev_norm(b.components[1].final, 1.0, g)])
    norms = np.array(norms)
    ratio = norms.max(axis=0) / norms.min(axis=0)
    report(4, bool(np.all(ratio <= 2)), f"max/min over k0 per component {ratio.round(4).tolist()} (<= 2)")


def test_criterion_5_hypothesis_checkers(report):
    g = GridSpec(n_x=64, x_min=-4.0, x_max=4.0, n_t=8, t_final=0.5)
    checks = {}
    pair = check_h2([XI, XSYM * XI], g)[(0, 1)]
    checks["(xi, x xi) pass(1)"] = pair.label() == "pass(1)" and abs(pair.witnesses[0] - 1) <= 1e-6
    checks["(x xi, -x xi) fail"] = check_h2([XSYM * XI, -(XSYM * XI)], g)[(0, 1)].status == "fail"
    h1 = check_h1(SymbolMatrix(2, {(1, 0): 1 / jb(XI)}), g)
    checks["<xi>^-1 slope"] = h1["passed"] and -1.1 <= h1[(1, 0)].slope <= -0.9
    a = parse("1+0.3*sin(t)")
    tri = triangularize_2x2(a, b1=1j * parse("0.3*cos(t)"), b2=None, grid=g)
    checks["b1 = -D_t a"] = check_h1(tri.B, g)["passed"]
    try:
        triangularize_2x2(a, grid=g)
        checks["b1 = 0 raises"] = False
    except H1Violation:
        checks["b1 = 0 raises"] = True
    failed = [k for k, v in checks.items() if not v]
    report(5, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f", failed {failed}" if failed else ""))


def test_criterion_6_wavefront_containment(report):
    g = GridSpec(n_x=512, x_min=-16.0, x_max=16.0, n_t=16, t_final=1.0)
    x = g.x
    H = g.band_limit(np.where(x >= 0, 1.0, 0.0) * np.exp(-(x / 2) ** 2), taper=True)
    lam = parse("(1+0.2*tanh(x))*xi")
    u = apply_g0(make_kernel(lam, None, g), H, 1.0)
    pred = propagate_wavefront(seed_wavefront([H], g), [lam], 1.0, depth=0, grid=g)
    dec = verify_prediction([u], pred, grid=g, margin_cells=1.0)
    g2 = GridSpec(n_x=512, x_min=-16.0, x_max=16.0, n_t=32, t_final=1.0)
    b = solve_2x2(A_CONST, B, [None, H], None, g2, M=8)
    pred2 = propagate_wavefront(seed_wavefront([None, H], g2), A_CONST.diagonal(), 1.0, depth=2,
                                breaks="anywhere", grid=g2)
    cpl = verify_prediction(b, pred2, grid=g2)
    n_found = sum(len(c["singular"]) for c in cpl["components"].values())
    ok = dec["passed"] and cpl["passed"] and len(dec["components"][0]["singular"]) > 0 and n_found > 0
    report(6, ok, f"decoupled {dec['passed']} (found {[round(float(p[0]), 4) for p in dec['components'][0]['singular']]}, "
                  f"predicted {[round(float(p.x), 4) for p in pred]}), coupled depth-2 subset {cpl['passed']} "
                  f"({n_found} singular points)")


def test_criterion_7_higher_order_round_trip(report):
    g = GridSpec(n_x=256, n_t=64, t_final=0.25)
    x, xi, T, c = g.x, g.xi, g.t_final, 1.5
    g0 = g.band_limit(np.exp(-x**2) * np.cos(3 * x))
    g1 = g.band_limit(1j * np.exp(-(x - 1) ** 2))
    sol = solve_higher_order(HigherOrderProblem(2, {2: f"{c}**2*xi**2"}, data=[g0, g1]), g)
    w = c * xi
    h0, h1 = g.to_band(g0), g.to_band(g1)
    u_ex = g.from_band(h0 * np.cos(w * T) + 1j * h1 * np.sin(w * T) / w)
    # D_t = -i d/dt
    dtu_ex = g.from_band(-1j * (-w * np.sin(w * T) * h0 + 1j * np.cos(w * T) * h1))
    e_u = relative_l2(sol.u.final, u_ex)
    e_dt = relative_l2(sol.derivatives[1].final, dtu_ex)
    orders_ok = all(o <= l - 2 + 1e-9 for (j, l), o in sol.chain_orders.items())
    ok = e_u <= 1e-3 and e_dt <= 1e-3 and orders_ok
    report(7, ok, f"u rel L2 {e_u:.2e}, D_t u rel L2 {e_dt:.2e} (<= 1e-3), chain orders {sol.chain_orders}")


def test_criterion_8_oracle_integrity(report):
    g = GridSpec(n_x=256, n_t=64, t_final=0.25)
    u0 = packets(g)
    agree = relative_l2(solve_mol(A_CONST, B, u0, None, g).array(),
                        solve_constant_coeff(A_CONST, B, u0, None, g).array())
    finals = []
    for n_t in (8, 16, 32):
        gg = GridSpec(n_x=128, n_t=n_t, t_final=0.25)
        finals.append(solve_mol(A_VAR, B, packets(gg), None, gg, oversample=1).final())
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    order = np.log2(e1 / e2)
    report(8, agree <= 1e-8 and order >= 3, f"mol vs mode oracle {agree:.1e} (<= 1e-8), "
                                            f"self-convergence order {order:.2f} (>= 3)")
