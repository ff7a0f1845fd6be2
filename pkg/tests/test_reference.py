import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypfio.errors import CFLViolation
from hypfio.grid import GridSpec, relative_l2
from hypfio.hypotheses import SymbolMatrix
from hypfio.reference import ModeOracle, solve_constant_coeff, solve_mol, sobolev_norm

GRID = GridSpec(n_x=128, x_min=-4 * np.pi, x_max=4 * np.pi, n_t=32, t_final=0.25)
X = GRID.x


def packet(x0, k):
    return GRID.band_limit(np.exp(-((X - x0) ** 2)) * np.exp(1j * k * X))


def test_scalar_mode_transport():
    c, k0 = 1.5, 2.0
    b = solve_constant_coeff(SymbolMatrix.from_rows([[f"{c}*xi"]]), SymbolMatrix.zeros(1),
                             [np.exp(1j * k0 * X)], None, GRID)
    np.testing.assert_allclose(b.components[0].final, np.exp(1j * k0 * (X + c * GRID.t_final)), atol=1e-9)


def test_triangular_closed_form():
    A = SymbolMatrix.from_rows([["xi", "0.5*jb(xi)"], ["0", "2*xi"]])
    u0 = [packet(0.0, 3.0), packet(1.0, -2.0)]
    b = solve_constant_coeff(A, SymbolMatrix.zeros(2), u0, None, GRID)
    xi, t = GRID.xi, GRID.t_final
    l1, l2, a12 = xi, 2 * xi, 0.5 * np.sqrt(1 + xi**2)
    h1, h2 = GRID.to_band(u0[0]), GRID.to_band(u0[1])
    v2 = np.exp(1j * l2 * t) * h2
    v1 = np.exp(1j * l1 * t) * h1 + a12 * (np.exp(1j * l2 * t) - np.exp(1j * l1 * t)) / (l2 - l1) * h2
    assert relative_l2(b.components[1].final, GRID.from_band(v2)) <= 1e-9
    assert relative_l2(b.components[0].final, GRID.from_band(v1)) <= 1e-9


def test_forcing_short_time():
    g = GridSpec(n_x=128, x_min=GRID.x_min, x_max=GRID.x_max, n_t=4, t_final=1e-3)
    f0 = packet(0.0, 2.0)
    A = SymbolMatrix.from_rows([["xi"]])
    b = solve_constant_coeff(A, SymbolMatrix.zeros(1), None, lambda t: f0[None, :], g)
    t = g.t_final
    err = np.linalg.norm(b.components[0].final - 1j * t * f0)
    assert err <= 10 * t**2 * np.linalg.norm(f0) * (1 + g.xi_max)


def test_mode_oracle_energy():
    A = SymbolMatrix.from_rows([["xi", "0"], ["0", "-2*xi"]])
    b = solve_constant_coeff(A, SymbolMatrix.zeros(2), [packet(0, 3), packet(1, 2)], None, GRID)
    e0 = np.linalg.norm(b.array()[:, 0])
    e1 = np.linalg.norm(b.array()[:, -1])
    assert abs(e1 - e0) <= 1e-8 * e0
    assert ModeOracle(A, SymbolMatrix.zeros(2), GRID).matrix(0.0).shape == (GRID.xi.size, 2, 2)
    with pytest.raises(ValueError):
        ModeOracle(SymbolMatrix.from_rows([["x*xi"]]), SymbolMatrix.zeros(1), GRID)


def test_mol_matches_mode_oracle():
    A = SymbolMatrix.from_rows([["xi", "0.5*jb(xi)"], ["0", "2*xi"]])
    B = SymbolMatrix.from_rows([["0", "0"], ["0.3/jb(xi)", "0"]])
    u0 = [packet(0.0, 3.0), packet(1.0, -2.0)]
    ref = solve_constant_coeff(A, B, u0, None, GRID)
    mol = solve_mol(A, B, u0, None, GRID)
    assert relative_l2(mol.array(), ref.array()) <= 1e-8


def test_mol_self_convergence():
    A = SymbolMatrix.from_rows([["(1+0.2*tanh(x))*xi"]])
    u0 = [packet(0.0, 6.0)]
    finals = []
    for n_t in (8, 16, 32):
        g = GridSpec(n_x=128, x_min=GRID.x_min, x_max=GRID.x_max, n_t=n_t, t_final=0.25)
        finals.append(solve_mol(A, SymbolMatrix.zeros(1), u0, None, g, oversample=1).components[0].final)
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    assert e1 / e2 >= 8


def test_mol_zero_data_and_cfl_guard():
    A = SymbolMatrix.from_rows([["(1+0.2*tanh(x))*xi"]])
    assert np.all(solve_mol(A, SymbolMatrix.zeros(1), None, None, GRID).array() == 0)
    fast = SymbolMatrix.from_rows([["500*xi"]])
    with pytest.raises(CFLViolation):
        solve_mol(fast, SymbolMatrix.zeros(1), [packet(0, 1)], None, GRID, max_substeps=8)


def test_sobolev_norm_modes():
    k0 = 3.0
    e = np.exp(1j * k0 * X)
    n0 = sobolev_norm(e, 0.0, GRID)
    assert n0 == pytest.approx(np.sqrt(GRID.length), rel=1e-12)
    assert sobolev_norm(e, 1.0, GRID) == pytest.approx(np.sqrt(1 + k0**2) * n0, rel=1e-12)
    assert sobolev_norm(e, -1.0, GRID) == pytest.approx(n0 / np.sqrt(1 + k0**2), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(s1=st.floats(-3, 3), ds=st.floats(0, 3), seed=st.integers(0, 1000))
def test_sobolev_monotone(s1, ds, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(GRID.n_x) + 1j * rng.standard_normal(GRID.n_x)
    assert sobolev_norm(u, s1, GRID) <= sobolev_norm(u, s1 + ds, GRID) * (1 + 1e-12)
