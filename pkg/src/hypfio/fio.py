"""
Numerical propagators: the FIO ``G0`` acting on initial data, the kernel
``E(t, s)`` and the Duhamel operator ``G g = int_0^t E(t, s) g(s) ds``, plus
pseudo-differential multipliers in Kohn-Nirenberg form.

Histories are complex arrays of shape ``(n_times, n_x)`` holding grid
values at every time level.  Each history operator comes with its
Euclidean adjoint (sum over all entries), which the contraction estimate
needs.

Quadrature is a direct sum over the xi-band,
``u(x) = (1/n_x) sum_b exp(i xi_b z(x)) C(x, sign xi_b) g_hat(xi_b)``.
When ``z - x`` and ``C`` do not depend on ``x`` (constant coefficients) the
same sum collapses to a Fourier multiplier and is evaluated that way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flow import AmplitudeTable, PhaseTable, solve_eikonal, solve_transport
from .grid import ComponentField, GridSpec
from .symbols import Expr, evaluate

CACHE_BUDGET = 96e6  # bytes of synthesis matrices kept per kernel


def _values(f) -> np.ndarray:
    if isinstance(f, ComponentField):
        return f.values if f.values.shape[0] > 1 else f.values[0]
    return np.asarray(f, dtype=complex)


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    """``w[k, l]`` for ``int_0^{t_k} ds`` on the time grid (zero for ``l > k``)."""
    n = grid.n_times
    w = np.tril(np.full((n, n), grid.dt))
    idx = np.arange(n)
    w[idx, idx] = grid.dt / 2
    w[:, 0] = grid.dt / 2
    w[0, 0] = 0.0
    return w


@dataclass
class FioKernel:
    """Phase plus amplitude defining ``G0``, ``E(t, s)`` and ``G`` for one eigenvalue."""

    phase: PhaseTable
    amplitude: AmplitudeTable
    order: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.grid
        self.pos = g.xi > 0
        self.neg = ~self.pos
        self.weights = trapezoid_weights(g)
        self.translation = self._detect_translation()
        self._cache_ok = g.n_times * g.n_x * g.xi.size * 16 <= CACHE_BUDGET

    @property
    def grid(self) -> GridSpec:
        return self.phase.grid

    @property
    def j(self) -> int:
        return self.phase.j

    # -- table access ----------------------------------------------------
    def _detect_translation(self) -> bool:
        shift = self.phase.z - self.grid.x
        if not self.phase.by_lag:
            shift = shift[np.tril_indices(self.grid.n_times)]
        if np.max(np.ptp(shift, axis=-1)) > 1e-12 * (1 + np.max(np.abs(shift))):
            return False
        for tab in (self.amplitude.pos, self.amplitude.neg):
            if np.max(np.abs(tab - tab[..., :1])) > 1e-13:
                return False
        return True

    def _amp_rows(self, d: int, sign: int) -> np.ndarray:
        """Amplitudes ``C(t_k, t_{k-d}, x)`` for ``k = d..n-1`` (broadcastable)."""
        a = self.amplitude
        tab = a.pos if sign >= 0 else a.neg
        if a.by_lag:
            return tab[d][None, :]
        n = self.grid.n_times
        return tab[np.arange(d, n), np.arange(n - d)]

    def synthesis(self, k: int, l: int) -> np.ndarray:
        """Matrix ``exp(i xi_b z(t_k, t_l, x_i)) / n_x``."""
        key = (k - l) if self.phase.by_lag else None
        if key is not None and key in self._cache:
            return self._cache[key]
        mat = self.grid.synthesis_matrix(self.phase.feet(k, l))
        if key is not None and self._cache_ok:
            self._cache[key] = mat
        return mat

    def multiplier(self, k: int, l: int) -> np.ndarray:
        """Band multiplier of ``E(t_k, t_l)`` in the translation case."""
        g = self.grid
        shift = self.phase.feet(k, l)[0] - g.x[0]
        amp = np.where(self.pos, self.amplitude.amp(k, l, 1)[0], self.amplitude.amp(k, l, -1)[0])
        return np.exp(1j * g.xi * shift) * amp

    def _mult_table(self) -> np.ndarray:
        if "mult" not in self._cache:
            n = self.grid.n_times
            tab = np.zeros((n, n, self.grid.xi.size), dtype=complex)
            for k in range(n):
                for l in range(k + 1):
                    tab[k, l] = self.multiplier(k, l)
            self._cache["mult"] = tab
        return self._cache["mult"]

    def _pair(self, coeffs: np.ndarray, k: int, l: int) -> np.ndarray:
        """``E(t_k, t_l)`` applied to band coefficients, returned on the grid."""
        if self.translation:
            return self.grid.from_band(self.multiplier(k, l) * coeffs)
        K = self.synthesis(k, l)
        if not self.amplitude.split:
            return self.amplitude.amp(k, l, 1) * (K @ coeffs)
        return (self.amplitude.amp(k, l, 1) * (K[:, self.pos] @ coeffs[self.pos])
                + self.amplitude.amp(k, l, -1) * (K[:, self.neg] @ coeffs[self.neg]))

    def _pair_adjoint(self, v: np.ndarray, k: int, l: int) -> np.ndarray:
        """Band-side adjoint of :meth:`_pair` (returns band coefficients)."""
        if self.translation:
            return np.conj(self.multiplier(k, l)) * self.grid.to_band(v) / self.grid.n_x
        K = self.synthesis(k, l)
        out = np.empty(self.grid.xi.size, dtype=complex)
        for sign, sel in ((1, self.pos), (-1, self.neg)):
            out[sel] = (np.conj(self.amplitude.amp(k, l, sign)) * v) @ np.conj(K[:, sel])
        return out


def make_kernel(lam: Expr, b_diag: Expr | None, grid: GridSpec, j: int = 0) -> FioKernel:
    """Solve the eikonal and transport problems for ``lam`` and wrap them."""
    phase = solve_eikonal(lam, grid, j)
    amp = solve_transport(lam, b_diag, phase, grid)
    return FioKernel(phase, amp)


# -- single-time entry points --------------------------------------------

def apply_g0(kernel: FioKernel, theta, t: float, check: bool = True) -> np.ndarray:
    """``(G0 theta)(t, .)``: propagate data given at ``t = t0``."""
    g = kernel.grid
    coeffs = g.to_band(_values(theta))
    if check:
        g.check_aliasing(coeffs, "apply_g0 input")
    return kernel._pair(coeffs, g.time_index(t), 0)


def apply_E(kernel: FioKernel, gs, t: float, s: float, check: bool = True) -> np.ndarray:
    """``E(t, s) g(s, .)`` for grid times ``s <= t``."""
    g = kernel.grid
    k, l = g.time_index(t), g.time_index(s)
    if l > k:
        raise ValueError("apply_E needs s <= t")
    coeffs = g.to_band(_values(gs))
    if check:
        g.check_aliasing(coeffs, "apply_E input")
    return kernel._pair(coeffs, k, l)


def apply_g(kernel: FioKernel, hist, t: float, check: bool = True) -> np.ndarray:
    """Trapezoid Duhamel integral ``int_0^t E(t, s) g(s) ds`` at grid time ``t``."""
    g = kernel.grid
    k = g.time_index(t)
    vals = _values(hist)
    if vals.ndim != 2 or vals.shape[0] < k + 1:
        raise ValueError("apply_g needs g on every grid time up to t")
    coeffs = g.to_band(vals[: k + 1])
    if check:
        g.check_aliasing(coeffs, "apply_g input")
    out = np.zeros(g.n_x, dtype=complex)
    for l in range(k + 1):
        w = kernel.weights[k, l]
        if w:
            out += w * kernel._pair(coeffs[l], k, l)
    return out


# -- history operators -----------------------------------------------------

def g0_history(kernel: FioKernel, theta) -> np.ndarray:
    """``G0 theta`` at every grid time, shape ``(n_times, n_x)``."""
    g = kernel.grid
    coeffs = g.to_band(_values(theta))
    if kernel.translation:
        mult = kernel._mult_table()[:, 0]
        return g.from_band(mult * coeffs)
    return np.stack([kernel._pair(coeffs, k, 0) for k in range(g.n_times)])


def g0_history_adjoint(kernel: FioKernel, h: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`g0_history`: history -> data."""
    g = kernel.grid
    if kernel.translation:
        mult = kernel._mult_table()[:, 0]
        return g.to_band_adjoint(np.sum(np.conj(mult) * g.to_band(h) / g.n_x, axis=0))
    acc = np.zeros(g.xi.size, dtype=complex)
    for k in range(g.n_times):
        acc += kernel._pair_adjoint(h[k], k, 0)
    return g.to_band_adjoint(acc)


def g_history(kernel: FioKernel, hist: np.ndarray) -> np.ndarray:
    """``G g`` at every grid time."""
    g = kernel.grid
    n = g.n_times
    coeffs = g.to_band(hist)
    w = kernel.weights
    if kernel.translation:
        out = np.einsum("kl,klb,lb->kb", w, kernel._mult_table(), coeffs)
        return g.from_band(out)
    out = np.zeros((n, g.n_x), dtype=complex)
    if not kernel.phase.by_lag:
        for k in range(1, n):
            for l in range(k + 1):
                out[k] += w[k, l] * kernel._pair(coeffs[l], k, l)
        return out
    split = kernel.amplitude.split
    for d in range(n):
        wd = w[np.arange(d, n), np.arange(n - d)][:, None]
        K = kernel.synthesis(d, 0)
        rows = coeffs[: n - d]
        if not split:
            out[d:] += wd * kernel._amp_rows(d, 1) * (rows @ K.T)
        else:
            for sign, sel in ((1, kernel.pos), (-1, kernel.neg)):
                out[d:] += wd * kernel._amp_rows(d, sign) * (rows[:, sel] @ K[:, sel].T)
    return out


def g_history_adjoint(kernel: FioKernel, h: np.ndarray) -> np.ndarray:
    """Euclidean adjoint of :func:`g_history`."""
    g = kernel.grid
    n = g.n_times
    w = kernel.weights
    if kernel.translation:
        hb = g.to_band(h) / g.n_x
        acc = np.einsum("kl,klb,kb->lb", w, np.conj(kernel._mult_table()), hb)
        return g.to_band_adjoint(acc)
    acc = np.zeros((n, g.xi.size), dtype=complex)
    if not kernel.phase.by_lag:
        for k in range(1, n):
            for l in range(k + 1):
                acc[l] += w[k, l] * kernel._pair_adjoint(h[k], k, l)
        return g.to_band_adjoint(acc)
    for d in range(n):
        wd = w[np.arange(d, n), np.arange(n - d)][:, None]
        K = kernel.synthesis(d, 0)
        for sign, sel in ((1, kernel.pos), (-1, kernel.neg)):
            r = wd * np.conj(kernel._amp_rows(d, sign)) * h[d:]
            acc[: n - d, sel] += r @ np.conj(K[:, sel])
    return g.to_band_adjoint(acc)


# -- symbols ----------------------------------------------------------------

_KN_CACHE: dict = {}


def _kn_matrix(p: Expr, grid: GridSpec, t: float) -> np.ndarray:
    key = (p.key(), grid.digest(), None if not p.depends_on("t") else t)
    mat = _KN_CACHE.get(key)
    if mat is None:
        X, XIg = np.meshgrid(grid.x, grid.xi, indexing="ij")
        mat = grid.synthesis_matrix(grid.x, evaluate(p, t, X, XIg))
        if not p.depends_on("t"):
            if len(_KN_CACHE) > 64:
                _KN_CACHE.clear()
            _KN_CACHE[key] = mat
    return mat


def _symbol_kind(p: Expr) -> str:
    if p.is_zero:
        return "zero"
    if not p.free_vars():
        return "scalar"
    if not p.depends_on("x"):
        return "multiplier"
    return "kn"


def apply_symbol(p: Expr, f, grid: GridSpec, t: float = 0.0, check: bool = True) -> np.ndarray:
    """Kohn-Nirenberg action ``(1/n_x) sum_b exp(i x xi_b) p(t, x, xi_b) f_hat(xi_b)``.

    Constant symbols act as plain scalars; x-independent symbols as Fourier
    multipliers on the band.
    """
    vals = _values(f)
    kind = _symbol_kind(p)
    if kind == "zero":
        return np.zeros_like(vals)
    if kind == "scalar":
        return complex(evaluate(p)) * vals
    coeffs = grid.to_band(vals)
    if check:
        grid.check_aliasing(coeffs, "apply_symbol input")
    if kind == "multiplier":
        return grid.from_band(evaluate(p, t, 0.0, grid.xi) * coeffs)
    return coeffs @ _kn_matrix(p, grid, t).T


def symbol_history(p: Expr, hist: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Apply ``p(t_k, x, D)`` to row ``k`` of a history."""
    kind = _symbol_kind(p)
    if kind == "zero":
        return np.zeros_like(hist)
    if kind == "scalar":
        return complex(evaluate(p)) * hist
    coeffs = grid.to_band(hist)
    times = grid.times[:, None]
    if kind == "multiplier":
        return grid.from_band(evaluate(p, times, 0.0, grid.xi[None, :]) * coeffs)
    if not p.depends_on("t"):
        return coeffs @ _kn_matrix(p, grid, 0.0).T
    return np.stack([coeffs[k] @ _kn_matrix(p, grid, tk).T for k, tk in enumerate(grid.times)])


def symbol_history_adjoint(p: Expr, hist: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Euclidean adjoint of :func:`symbol_history`."""
    kind = _symbol_kind(p)
    if kind == "zero":
        return np.zeros_like(hist)
    if kind == "scalar":
        return np.conj(complex(evaluate(p))) * hist
    if kind == "multiplier":
        times = grid.times[:, None]
        return grid.from_band(np.conj(evaluate(p, times, 0.0, grid.xi[None, :])) * grid.to_band(hist))
    if not p.depends_on("t"):
        return grid.to_band_adjoint(hist @ np.conj(_kn_matrix(p, grid, 0.0)))
    return np.stack([grid.to_band_adjoint(hist[k] @ np.conj(_kn_matrix(p, grid, tk)))
                     for k, tk in enumerate(grid.times)])


# -- residual diagnostics ---------------------------------------------------

def time_derivative(hist: np.ndarray, dt: float) -> np.ndarray:
    """``D_t = -i d/dt`` by second-order finite differences (one-sided at the ends)."""
    return -1j * np.gradient(hist, dt, axis=0, edge_order=2)


def transport_residual(kernel: FioKernel, w: np.ndarray, lam: Expr, b_diag: Expr | None = None,
                       forcing: np.ndarray | None = None) -> float:
    """Max over time of ``||D_t w - lam(x, D) w - b w - f||_{L2}`` on the grid."""
    g = kernel.grid
    res = time_derivative(w, g.dt) - symbol_history(lam, w, g)
    if b_diag is not None:
        res -= symbol_history(b_diag, w, g)
    if forcing is not None:
        res -= forcing
    return float(np.max(np.sqrt(g.dx) * np.linalg.norm(res, axis=-1)))
