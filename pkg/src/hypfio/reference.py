"""
Independent reference solvers.

``solve_constant_coeff`` integrates each Fourier mode of a system with
x-independent symbols; ``solve_mol`` is a pseudospectral method of lines
for variable coefficients.  Neither uses phases, amplitudes or Neumann
series, so both can serve as oracles for the representation formula.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CFLViolation
from .fio import apply_symbol
from .grid import ComponentField, GridSpec, SolutionBundle, sobolev_norm
from .hypotheses import SymbolMatrix
from .symbols import evaluate

__all__ = ["ModeOracle", "solve_constant_coeff", "solve_mol", "sobolev_norm", "forcing_callable"]


def forcing_callable(f, m: int, grid: GridSpec) -> Callable | None:
    """Normalise forcing to ``t -> (m, n_x)`` array.

    Accepts ``None``, a callable, or a list of symbol expressions in ``(t, x)``
    (``None`` entries mean zero).
    """
    if f is None:
        return None
    if callable(f):
        return f
    exprs = list(f)
    if all(e is None for e in exprs):
        return None

    def fn(t):
        out = np.zeros((m, grid.n_x), dtype=complex)
        for j, e in enumerate(exprs):
            if e is not None:
                out[j] = evaluate(e, t, grid.x, 0.0)
        return out

    return fn


def _data(u0, m, grid):
    out = np.zeros((m, grid.n_x), dtype=complex)
    if u0 is not None:
        for j, v in enumerate(u0):
            if v is not None:
                out[j] = v
    return out


def _bundle(hist: np.ndarray, grid: GridSpec, s: float, diag: dict) -> SolutionBundle:
    comps = [ComponentField(hist[:, j], grid, s + j, f"u{j + 1}") for j in range(hist.shape[1])]
    return SolutionBundle(comps, grid, diag)


def _rk4(rhs, y, t, h):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + h / 2 * k1)
    k3 = rhs(t + h / 2, y + h / 2 * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class ModeOracle:
    """Per-mode matrices ``i (A(xi) + B(t, xi))`` on the xi-band."""

    A: SymbolMatrix
    B: SymbolMatrix
    grid: GridSpec

    def __post_init__(self):
        if self.A.depends_on("x") or self.B.depends_on("x"):
            raise ValueError("mode oracle needs x-independent symbols")
        self._const = None if (self.A.depends_on("t") or self.B.depends_on("t")) else self._build(0.0)

    def _build(self, t):
        xi = self.grid.xi
        return 1j * (self.A.evaluate(t, 0.0, xi) + self.B.evaluate(t, 0.0, xi))

    def matrix(self, t: float) -> np.ndarray:
        """Shape ``(n_band, m, m)``."""
        return self._const if self._const is not None else self._build(t)


def solve_constant_coeff(A: SymbolMatrix, B: SymbolMatrix, u0=None, f=None, grid: GridSpec | None = None,
                         oversample: int = 4, s: float = 0.0) -> SolutionBundle:
    """RK4 on ``u_hat' = i (A + B) u_hat + i f_hat`` for every band mode.

    ``oversample`` RK4 steps are taken per grid time step.
    """
    grid = grid or GridSpec()
    m = A.m
    oracle = ModeOracle(A, B, grid)
    fn = forcing_callable(f, m, grid)
    y = grid.to_band(_data(u0, m, grid)).T.copy()  # (n_band, m)

    def rhs(t, y):
        out = np.einsum("bij,bj->bi", oracle.matrix(t), y)
        if fn is not None:
            out = out + 1j * grid.to_band(np.asarray(fn(t))).T
        return out

    hist = np.zeros((grid.n_times, m, grid.n_x), dtype=complex)
    hist[0] = grid.from_band(y.T)
    h = grid.dt / oversample
    for k in range(1, grid.n_times):
        t = grid.times[k - 1]
        for r in range(oversample):
            y = _rk4(rhs, y, t + r * h, h)
        hist[k] = grid.from_band(y.T)
    return _bundle(hist, grid, s, {"method": "mode-rk4", "steps_per_dt": oversample})


def _speed_bound(A: SymbolMatrix, grid: GridSpec) -> float:
    """Largest ``|eig A(t, x, xi_max)| / xi_max`` over the grid (the ``|a_jj|`` for triangular A)."""
    tt, xx = np.meshgrid(grid.times, grid.x, indexing="ij")
    mats = A.evaluate(tt, xx, grid.xi_max)
    return float(np.max(np.abs(np.linalg.eigvals(mats)))) / grid.xi_max


def solve_mol(A: SymbolMatrix, B: SymbolMatrix, u0=None, f=None, grid: GridSpec | None = None,
              cfl: float = 0.5, oversample: int = 4, max_substeps: int = 4096,
              s: float = 0.0) -> SolutionBundle:
    """Pseudospectral method of lines with RK4 time stepping.

    Each grid step is split into ``max(oversample, ceil(a_max dt / (cfl dx)))``
    RK4 substeps; :class:`CFLViolation` is raised when that exceeds
    ``max_substeps``.  Symbol actions use the same Kohn-Nirenberg quadrature
    as the propagators (Fourier multipliers when x-independent).
    """
    grid = grid or GridSpec()
    m = A.m
    fn = forcing_callable(f, m, grid)
    a_max = _speed_bound(A, grid)
    need = int(np.ceil(a_max * grid.dt / (cfl * grid.dx))) if grid.dt > 0 else 1
    sub = max(oversample, need)
    if sub > max_substeps:
        raise CFLViolation(f"a_max*dt/dx = {a_max * grid.dt / grid.dx:.3g} needs {sub} substeps > {max_substeps}")
    entries = [[(i, j, A[i, j] + B[i, j]) for j in range(m) if not (A[i, j] + B[i, j]).is_zero]
               for i in range(m)]

    def rhs(t, y):
        out = np.zeros_like(y)
        for row in entries:
            for i, j, p in row:
                out[i] += apply_symbol(p, y[j], grid, t, check=False)
        if fn is not None:
            out = out + np.asarray(fn(t))
        return 1j * out

    y = _data(u0, m, grid)
    hist = np.zeros((grid.n_times, m, grid.n_x), dtype=complex)
    hist[0] = y
    h = grid.dt / sub
    for k in range(1, grid.n_times):
        t = grid.times[k - 1]
        for r in range(sub):
            y = _rk4(rhs, y, t + r * h, h)
        hist[k] = y
    return _bundle(hist, grid, s, {"method": "mol-rk4", "substeps": sub,
                                   "cfl": a_max * h / grid.dx})
