"""
Bicharacteristic flows, eikonal phases and leading transport amplitudes.

For ``lam = a(t, x) xi`` the phase is ``phi(t, s, x, xi) = xi z(t, s, x)``
where ``z`` is the foot at time ``s`` of the characteristic
``dq/dtau = -a(tau, q)`` that passes through ``x`` at time ``t``.  When ``a``
does not depend on ``t`` the characteristic only depends on the lag
``t - s`` and the tables are stored by lag, otherwise as full
``(t, s, x)`` arrays.
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass

import numpy as np

from .errors import FlowEscape
from .grid import GridSpec
from .symbols import Expr, differentiate, evaluate

DEFAULT_FLOW_STEP = 1.0 / 256


def _real(v):
    return np.real(v)


def _padded_box(grid: GridSpec | None):
    if grid is None:
        return None
    pad = 0.5 * grid.length
    return grid.x_min - pad, grid.x_max + pad


def _check_box(x, box, where=""):
    if box is None:
        return
    if np.any(~np.isfinite(x)) or np.any(x < box[0]) or np.any(x > box[1]):
        raise FlowEscape(f"characteristic left the padded box [{box[0]:.4g}, {box[1]:.4g}]{where}")


def hamiltonian_flow(lam: Expr, t: float, y, eta, t0: float = 0.0, n_steps: int | None = None,
                     grid: GridSpec | None = None):
    """Integrate ``dx/dtau = d_xi lam``, ``dxi/dtau = -d_x lam`` from ``(y, eta)``.

    The flow runs from ``tau = t0`` to ``t0 + t``; negative ``t`` runs it
    backward.  ``y`` and ``eta`` broadcast.  Fixed-step RK4 with ``n_steps``
    steps (default: step at most 1/256).  With ``grid`` given, ``|eta|`` must be
    at least ``grid.xi_cut`` and the trajectory must stay inside the box padded
    by half its length on each side.
    """
    y, eta = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(eta, dtype=float))
    x, xi = y.copy(), eta.copy()
    if grid is not None and np.any(np.abs(eta) < grid.xi_cut * (1 - 1e-12)):
        raise ValueError("|eta| must be at least xi_cut")
    if t == 0:
        return x, xi
    if n_steps is None:
        n_steps = max(16, int(np.ceil(abs(t) / DEFAULT_FLOW_STEP)))
    h = t / n_steps
    dl_dxi = differentiate(lam, "xi")
    dl_dx = differentiate(lam, "x")
    box = _padded_box(grid)

    def rhs(tau, x, xi):
        return _real(evaluate(dl_dxi, tau, x, xi)), -_real(evaluate(dl_dx, tau, x, xi))

    tau = t0
    for _ in range(n_steps):
        k1x, k1p = rhs(tau, x, xi)
        k2x, k2p = rhs(tau + h / 2, x + h / 2 * k1x, xi + h / 2 * k1p)
        k3x, k3p = rhs(tau + h / 2, x + h / 2 * k2x, xi + h / 2 * k2p)
        k4x, k4p = rhs(tau + h, x + h * k3x, xi + h * k3p)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        xi = xi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        tau += h
        _check_box(x, box)
    return x, xi


@dataclass
class FlowMap:
    """Table ``Phi^t(y, eta) = (x, xi)`` on ``times x y x eta``."""

    j: int
    times: np.ndarray
    y: np.ndarray
    eta: np.ndarray
    x: np.ndarray
    xi: np.ndarray

    def __call__(self, k: int):
        return self.x[k], self.xi[k]


def flow_map(lam: Expr, grid: GridSpec, eta=None, j: int = 0) -> FlowMap:
    """Tabulate the flow at every grid time for starting points ``grid.x x eta``."""
    if eta is None:
        eta = grid.xi[:: max(1, grid.xi.size // 16)]
    eta = np.asarray(eta, dtype=float)
    Y, E = np.meshgrid(grid.x, eta, indexing="ij")
    xs = np.empty((grid.n_times,) + Y.shape)
    ps = np.empty_like(xs)
    xs[0], ps[0] = Y, E
    x, p = Y, E
    for k in range(1, grid.n_times):
        x, p = hamiltonian_flow(lam, grid.dt, x, p, t0=grid.times[k - 1],
                                n_steps=grid.ode_steps_per_dt, grid=grid)
        xs[k], ps[k] = x, p
    return FlowMap(j, grid.times.copy(), grid.x.copy(), eta, xs, ps)


def speed_of(lam: Expr, grid: GridSpec, n: int = 64, seed: int = 0) -> Expr:
    """Return ``a`` with ``lam = a xi``; raises if ``lam`` is not of that form."""
    a = lam.subs(xi=1.0) if lam.depends_on("xi") else lam * 0.0
    rng = np.random.default_rng(seed)
    t = rng.uniform(grid.t0, grid.t0 + max(grid.t_final, 1e-12), n)
    x = rng.uniform(grid.x_min, grid.x_max, n)
    xi = rng.uniform(-grid.xi_max, grid.xi_max, n)
    lhs = evaluate(lam, t, x, xi)
    rhs = evaluate(a, t, x, 1.0) * xi
    if np.max(np.abs(lhs - rhs)) > 1e-9 * (1 + np.max(np.abs(lhs))):
        raise ValueError(f"eigenvalue {lam} is not of the form a(t,x)*xi")
    if np.max(np.abs(np.imag(rhs))) > 1e-12 * (1 + np.max(np.abs(rhs))):
        raise ValueError(f"eigenvalue {lam} is not real")
    return a


def _rk4_step(f, tau, y, h):
    k1 = f(tau, y)
    k2 = f(tau + h / 2, y + h / 2 * k1)
    k3 = f(tau + h / 2, y + h / 2 * k2)
    k4 = f(tau + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _characteristics(a: Expr, b: Expr | None, grid: GridSpec, by_lag: bool):
    """Integrate the characteristic and, if ``b`` is given, ``int b`` along it.

    Returns ``(z, logc)`` where ``logc = i int_s^t b(tau, q(tau)) dtau``.
    By lag: arrays ``(n_times, n_x)`` indexed by ``t - s``.  Otherwise
    ``(n_times, n_times, n_x)`` indexed by ``(t, s)``, zero for ``s > t``.
    """
    n, nx = grid.n_times, grid.n_x
    sub = grid.ode_steps_per_dt
    box = _padded_box(grid)
    if by_lag:
        z = np.empty((n, nx))
        lc = np.zeros((n, nx), dtype=complex)
        z[0] = grid.x
        # forward flow of +a for sigma = t - s: q(sigma) = z(t, t - sigma, x)
        state = np.concatenate([grid.x.astype(complex), np.zeros(nx, dtype=complex)])

        def f(tau, y):
            q = y[:nx].real
            out = np.empty_like(y)
            out[:nx] = _real(evaluate(a, 0.0, q, 1.0))
            out[nx:] = 1j * evaluate(b, 0.0, q, 1.0) if b is not None else 0.0
            return out

        h = grid.dt / sub
        for d in range(1, n):
            for r in range(sub):
                state = _rk4_step(f, (d - 1 + r / sub) * grid.dt, state, h)
            _check_box(state[:nx].real, box, f" at lag {d * grid.dt:.4g}")
            z[d] = state[:nx].real
            lc[d] = state[nx:]
        return z, lc

    z = np.zeros((n, n, nx))
    lc = np.zeros((n, n, nx), dtype=complex)
    rows = np.arange(n)
    # every row k starts at tau = t_k and runs backward in tau
    q = np.tile(grid.x, (n, 1)).astype(float)
    acc = np.zeros((n, nx), dtype=complex)
    z[rows, rows] = q
    t_start = grid.times[:, None]

    def f(back, y):
        # ``back`` is the elapsed backward time; y = (q, acc) stacked on axis 0
        tau = t_start - back
        qq = y[0].real
        dq = -_real(evaluate(a, tau, qq, 1.0)) * np.ones_like(qq)
        dacc = (1j * evaluate(b, tau, qq, 1.0) * np.ones_like(qq)) if b is not None else np.zeros_like(qq)
        # d/d(back): q moves by -dq/dtau, the integral from s to t grows by b
        return np.stack([-dq.astype(complex), dacc])

    y = np.stack([q.astype(complex), acc])
    h = grid.dt / sub
    for r in range(1, n):
        for i in range(sub):
            y = _rk4_step(f, (r - 1 + i / sub) * grid.dt, y, h)
        k = rows[r:]
        _check_box(y[0, k].real, box)
        z[k, k - r] = y[0, k].real
        lc[k, k - r] = y[1, k]
    return z, lc


@dataclass
class PhaseTable:
    """Feet ``z(t, s, x)`` of backward characteristics for ``lam = a xi``.

    ``z`` has shape ``(n_times, n_x)`` when ``by_lag`` (row ``d`` holds
    ``z(t, t - d dt, x)``) and ``(n_times, n_times, n_x)`` otherwise.
    """

    j: int
    lam: Expr
    a: Expr
    grid: GridSpec
    z: np.ndarray
    by_lag: bool

    def feet(self, k: int, l: int) -> np.ndarray:
        """``z(t_k, t_l, x)`` for ``l <= k``."""
        if l > k:
            raise ValueError("phase defined for s <= t only")
        return self.z[k - l] if self.by_lag else self.z[k, l]

    def phi(self, k: int, l: int, xi) -> np.ndarray:
        return np.multiply.outer(self.feet(k, l), np.asarray(xi))

    def eikonal_residual(self, xi: float | None = None) -> float:
        """Max over interior nodes of ``|d_t phi - a d_x phi|`` at ``xi`` (default ``xi_max``).

        Fourth-order central differences in ``t`` (at fixed ``s``) and ``x``.
        """
        g = self.grid
        xi = g.xi_max if xi is None else xi
        n = g.n_times
        if n < 5:
            raise ValueError("need at least 5 time levels for the residual")
        worst = 0.0
        pairs = [(k, 0) for k in range(2, n - 2)] if self.by_lag else \
            [(k, l) for l in range(n) for k in range(l + 2, n - 2)]
        for k, l in pairs:
            zt = (-self.feet(k + 2, l) + 8 * self.feet(k + 1, l) - 8 * self.feet(k - 1, l)
                  + self.feet(k - 2, l)) / (12 * g.dt)
            zk = self.feet(k, l)
            zx = (-zk[4:] + 8 * zk[3:-1] - 8 * zk[1:-3] + zk[:-4]) / (12 * g.dx)
            av = _real(evaluate(self.a, g.times[k], g.x[2:-2], 1.0))
            res = np.abs(xi * (zt[2:-2] - av * zx))
            worst = max(worst, float(np.max(res)))
        return worst

    def eikonal_tolerance(self) -> float:
        g = self.grid
        tt, xx = np.meshgrid(g.times, g.x, indexing="ij")
        a_inf = float(np.max(np.abs(evaluate(self.a, tt, xx, 1.0))))
        return 1e-4 * max(a_inf, 1e-300) * g.xi_max

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "s", "x", "z"])
        g = self.grid
        for k in range(g.n_times):
            for l in range(k + 1):
                for xv, zv in zip(g.x, self.feet(k, l)):
                    w.writerow([f"{g.times[k]:.12g}", f"{g.times[l]:.12g}", f"{xv:.12g}", f"{zv:.15e}"])
        return buf.getvalue()


def solve_eikonal(lam: Expr, grid: GridSpec, j: int = 0) -> PhaseTable:
    """Phase table for ``lam = a(t, x) xi`` by backward characteristics."""
    a = speed_of(lam, grid)
    by_lag = not a.depends_on("t")
    z, _ = _characteristics(a, None, grid, by_lag)
    return PhaseTable(j, lam, a, grid, z, by_lag)


@dataclass
class AmplitudeTable:
    """Leading amplitudes ``C(t, s, x)``, one table per xi sign.

    ``pos`` serves ``xi > 0`` and ``neg`` serves ``xi < 0``; they are the same
    array when the lower-order symbol has the same limit on both rays.
    Layout follows ``by_lag`` exactly like :class:`PhaseTable`.
    """

    j: int
    grid: GridSpec
    pos: np.ndarray
    neg: np.ndarray
    by_lag: bool

    @property
    def trivial(self) -> bool:
        return bool(np.all(self.pos == 1) and np.all(self.neg == 1))

    @property
    def split(self) -> bool:
        return self.pos is not self.neg

    def amp(self, k: int, l: int, sign: int = 1) -> np.ndarray:
        if l > k:
            raise ValueError("amplitude defined for s <= t only")
        tab = self.pos if sign >= 0 else self.neg
        return tab[k - l] if self.by_lag else tab[k, l]

    def c(self, k: int, sign: int = 1) -> np.ndarray:
        """``c(t_k, x) = C(t_k, 0, x)``."""
        return self.amp(k, 0, sign)


def limit_symbol(b: Expr, grid: GridSpec, sign: int) -> Expr:
    """``b(t, x, sign * xi_max)`` as a symbol in ``(t, x)``."""
    return b.subs(xi=float(sign * grid.xi_max)) if b.depends_on("xi") else b


def solve_transport(lam: Expr, b_diag: Expr | None, phase: PhaseTable, grid: GridSpec) -> AmplitudeTable:
    """Transport ``dC/dtau = i b0(tau, q(tau)) C`` along the characteristics of ``phase``.

    ``b0`` is ``b_diag`` frozen at ``xi = +-xi_max``.  Returns ``C = 1`` when
    ``b_diag`` is zero.
    """
    j = phase.j
    if b_diag is None or b_diag.is_zero:
        ones = np.ones_like(phase.z, dtype=complex)
        return AmplitudeTable(j, grid, ones, ones, phase.by_lag)
    b_pos = limit_symbol(b_diag, grid, 1)
    b_neg = limit_symbol(b_diag, grid, -1)
    tt, xx = np.meshgrid(grid.times, grid.x, indexing="ij")
    same = np.allclose(evaluate(b_pos, tt, xx, 0.0), evaluate(b_neg, tt, xx, 0.0), rtol=0, atol=1e-14)
    by_lag = phase.by_lag and not b_pos.depends_on("t") and not b_neg.depends_on("t")
    tabs = []
    for b0 in ([b_pos] if same else [b_pos, b_neg]):
        _, lc = _characteristics(phase.a, b0, grid, by_lag)
        tab = np.exp(lc)
        if not by_lag:
            tab = np.tril(np.ones((grid.n_times, grid.n_times)))[:, :, None] * tab
        tabs.append(tab)
    pos = tabs[0]
    neg = tabs[0] if same else tabs[1]
    return AmplitudeTable(j, grid, pos, neg, by_lag)


# -- cache -------------------------------------------------------------------

def cache_key(lam: Expr, grid: GridSpec, b: Expr | None = None) -> str:
    text = f"{lam}|{b}|{grid.digest()}"
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def save_tables(path, phase: PhaseTable, amp: AmplitudeTable | None = None) -> None:
    arrays = {"z": phase.z, "by_lag": np.array(phase.by_lag), "j": np.array(phase.j)}
    if amp is not None:
        arrays.update(pos=amp.pos, neg=amp.neg, amp_by_lag=np.array(amp.by_lag),
                      split=np.array(amp.split))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_tables(path, lam: Expr, grid: GridSpec):
    """Inverse of :func:`save_tables`; the caller supplies ``lam`` and ``grid``."""
    with np.load(path) as data:
        phase = PhaseTable(int(data["j"]), lam, speed_of(lam, grid), grid, data["z"].copy(),
                           bool(data["by_lag"]))
        amp = None
        if "pos" in data:
            pos = data["pos"].copy()
            neg = data["neg"].copy() if bool(data["split"]) else pos
            amp = AmplitudeTable(phase.j, grid, pos, neg, bool(data["amp_by_lag"]))
    return phase, amp
