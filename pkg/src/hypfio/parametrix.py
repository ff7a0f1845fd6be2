"""
Representation of the solution of an upper triangular system
``D_t u = A(x, D) u + B(t, x, D) u + f`` by propagators and truncated
Neumann series.

Writing ``P_ij = G_i o (a_ij + b_ij)``, the system is equivalent to
``u_i = U_i + sum_{j != i} P_ij u_j`` with ``U_i = G0_i u0_i + G_i f_i``.
Rows are eliminated from the bottom up; each step leaves an equation
``(I - K_i) u_i = ...`` whose operator ``K_i`` is inverted by a truncated
Neumann series.

Operators act on histories (arrays ``(n_times, n_x)``) and are composed
lazily from atoms; every atom has an exact Euclidean adjoint so that
operator norms can be estimated by power iteration.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractionFailure, H1Violation, NoConvergence
from .fio import (FioKernel, g0_history, g0_history_adjoint, g_history, g_history_adjoint,
                  make_kernel, symbol_history, symbol_history_adjoint, time_derivative)
from .grid import ComponentField, GridSpec, SolutionBundle
from .hypotheses import SymbolMatrix, check_h1, symbol_order
from .symbols import Expr

Q_SPLIT = 0.95
MAX_SPLIT = 6
M_CAP = 64


# -- operator algebra --------------------------------------------------------

class Op:
    """Linear operator on histories with a declared order on the Sobolev scale."""

    order: float = 0.0
    source = "history"  # domain: "history" or "data"

    def apply(self, h: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, h: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, h):
        return self.apply(h)

    def __matmul__(self, other: "Op") -> "Op":
        return chain(self, other)

    def __add__(self, other: "Op") -> "Op":
        return op_sum(self, other)

    @property
    def is_zero(self) -> bool:
        return False


class Identity(Op):
    order = 0.0

    def apply(self, h):
        return h

    def adjoint(self, h):
        return h

    def __repr__(self):
        return "I"


class Zero(Op):
    order = -np.inf

    def __init__(self, grid: GridSpec, source: str = "history"):
        self.grid = grid
        self.source = source

    def apply(self, h):
        return np.zeros((self.grid.n_times, self.grid.n_x), dtype=complex)

    def adjoint(self, h):
        if self.source == "data":
            return np.zeros(self.grid.n_x, dtype=complex)
        return np.zeros_like(h)

    @property
    def is_zero(self):
        return True

    def __repr__(self):
        return "0"


class SymbolOp(Op):
    """Pointwise-in-time action of ``p(t, x, D)``."""

    def __init__(self, p: Expr, grid: GridSpec, order: float | None = None):
        self.p = p
        self.grid = grid
        self.order = symbol_order(p, grid) if order is None else float(order)

    def apply(self, h):
        return symbol_history(self.p, h, self.grid)

    def adjoint(self, h):
        return symbol_history_adjoint(self.p, h, self.grid)

    @property
    def is_zero(self):
        return self.p.is_zero

    def __repr__(self):
        return f"Sym({self.p})"


class Integrated(Op):
    """Duhamel solution operator ``G_j``: ``w = G_j g`` solves ``D_t w = lam_j w + b_jj w + g``.

    Since ``D_t = -i d/dt`` this is ``i`` times the time integral of ``E_j(t, s) g(s)``.
    """

    order = 0.0

    def __init__(self, kernel: FioKernel):
        self.kernel = kernel

    def apply(self, h):
        return 1j * g_history(self.kernel, h)

    def adjoint(self, h):
        return -1j * g_history_adjoint(self.kernel, h)

    def __repr__(self):
        return f"G{self.kernel.j + 1}"


class Propagator(Op):
    """``G0_j``: data at the initial time -> history."""

    order = 0.0
    source = "data"

    def __init__(self, kernel: FioKernel):
        self.kernel = kernel

    def apply(self, theta):
        return g0_history(self.kernel, theta)

    def adjoint(self, h):
        return g0_history_adjoint(self.kernel, h)

    def __repr__(self):
        return f"G0{self.kernel.j + 1}"


class Chain(Op):
    """Composition in mathematical order: ``Chain(A, B)(h) = A(B(h))``.

    Atoms are stored left to right as written; application runs from the
    rightmost atom.  The declared order is the sum of the atom orders.
    """

    def __init__(self, atoms):
        self.atoms = list(atoms)
        self.order = float(sum(a.order for a in self.atoms))
        self.source = self.atoms[-1].source

    def apply(self, h):
        for a in reversed(self.atoms):
            h = a.apply(h)
        return h

    def adjoint(self, h):
        for a in self.atoms:
            h = a.adjoint(h)
        return h

    def __repr__(self):
        return " o ".join(repr(a) for a in self.atoms)


OperatorChain = Chain


class Sum(Op):
    def __init__(self, terms):
        self.terms = list(terms)
        self.order = max(t.order for t in self.terms)
        self.source = self.terms[0].source

    def apply(self, h):
        out = self.terms[0].apply(h)
        for t in self.terms[1:]:
            out = out + t.apply(h)
        return out

    def adjoint(self, h):
        out = self.terms[0].adjoint(h)
        for t in self.terms[1:]:
            out = out + t.adjoint(h)
        return out

    def __repr__(self):
        return "(" + " + ".join(repr(t) for t in self.terms) + ")"


class NeumannInverse(Op):
    """Truncated ``(I - K)^{-1} = sum_{k<=M} K^k`` (order zero)."""

    order = 0.0

    def __init__(self, inner: Op, M: int):
        self.inner = inner
        self.M = M

    def apply(self, h):
        acc = h
        term = h
        for _ in range(self.M):
            term = self.inner.apply(term)
            acc = acc + term
        return acc

    def adjoint(self, h):
        acc = h
        term = h
        for _ in range(self.M):
            term = self.inner.adjoint(term)
            acc = acc + term
        return acc

    def __repr__(self):
        return f"N[{self.inner!r}; M={self.M}]"


def chain(*ops: Op) -> Op:
    atoms = []
    for o in ops:
        if o.is_zero:
            return Zero(_grid_of(o, ops), ops[-1].source)
        if isinstance(o, Identity):
            continue
        atoms.extend(o.atoms if isinstance(o, Chain) else [o])
    if not atoms:
        return Identity()
    return atoms[0] if len(atoms) == 1 else Chain(atoms)


def op_sum(*ops: Op) -> Op:
    terms = []
    for o in ops:
        if o.is_zero:
            continue
        terms.extend(o.terms if isinstance(o, Sum) else [o])
    if not terms:
        return ops[0]
    return terms[0] if len(terms) == 1 else Sum(terms)


def _grid_of(o: Op, ops) -> GridSpec:
    for cand in (o,) + tuple(ops):
        if hasattr(cand, "grid"):
            return cand.grid
        if hasattr(cand, "kernel"):
            return cand.kernel.grid
    raise ValueError("cannot infer grid for zero operator")


# -- kernels -----------------------------------------------------------------

def build_diag_propagators(A: SymbolMatrix, B: SymbolMatrix, grid: GridSpec) -> list[FioKernel]:
    """One kernel per diagonal entry ``lam_j = a_jj`` with transport from ``b_jj``."""
    if not A.is_upper_triangular():
        raise ValueError("principal matrix must be upper triangular")
    return [make_kernel(A[j, j], B[j, j], grid, j) for j in range(A.m)]


def history_norm(h: np.ndarray, grid: GridSpec) -> float:
    """Discrete ``L2(0, T; L2)`` norm (``L2`` of a single level when ``T = 0``)."""
    dt = grid.dt if grid.dt > 0 else 1.0
    return float(np.sqrt(dt * grid.dx) * np.linalg.norm(h))


def _random_history(grid: GridSpec, rng) -> np.ndarray:
    shape = (grid.n_times, grid.n_x)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return grid.from_band(grid.to_band(v))


# -- contraction and Neumann inversion --------------------------------------

def estimate_contraction(chain_op: Op, grid: GridSpec, max_iter: int = 60, tol: float = 1e-4,
                         seed: int = 0, n_probes: int = 10) -> float:
    """Operator norm of ``chain_op`` on discrete ``L2`` histories.

    Krylov (Lanczos) iteration on ``K* K`` with the exact adjoint and full
    reorthogonalisation, which converges much faster than plain power
    iteration when the top singular values cluster.  If the top Ritz value
    has not settled to ``tol`` after ``max_iter`` steps a
    :class:`NoConvergence` warning is issued and the largest of the current
    estimate and ``n_probes`` random probe ratios is returned.
    """
    if chain_op.is_zero:
        return 0.0
    if chain_op.order > 1e-9:
        raise ValueError(f"contraction needs an order-zero operator, got order {chain_op.order}")
    rng = np.random.default_rng(seed)
    v = _random_history(grid, rng)
    v /= np.linalg.norm(v)
    basis = [v]
    alpha, beta = [], []
    prev = None
    theta = 0.0
    for it in range(max_iter):
        w = chain_op.adjoint(chain_op.apply(basis[-1]))
        a = float(np.real(np.vdot(basis[-1], w)))
        alpha.append(a)
        for q in basis:
            w = w - np.vdot(q, w) * q
        for q in basis:
            w = w - np.vdot(q, w) * q
        b = float(np.linalg.norm(w))
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        theta = float(np.max(np.linalg.eigvalsh(T)))
        if theta <= 0 and b == 0:
            return 0.0
        if b <= 1e-14 * max(abs(theta), 1e-300):
            return math.sqrt(max(theta, 0.0))
        if prev is not None and abs(theta - prev) <= tol * abs(theta):
            return math.sqrt(max(theta, 0.0))
        prev = theta
        beta.append(b)
        basis.append(w / b)
    warnings.warn("norm iteration did not converge; using random probes", NoConvergence, stacklevel=2)
    best = math.sqrt(max(theta, 0.0))
    for _ in range(n_probes):
        p = _random_history(grid, rng)
        best = max(best, float(np.linalg.norm(chain_op.apply(p)) / np.linalg.norm(p)))
    return best


def auto_terms(q_hat: float, target: float = 1e-10) -> int:
    """``M = ceil(log(target) / log(q_hat))`` clipped to ``[0, 64]``."""
    if q_hat <= 0:
        return 0
    if q_hat >= 1:
        return M_CAP
    return int(min(M_CAP, max(1, math.ceil(math.log(target) / math.log(q_hat) - 1e-9))))


@dataclass
class NeumannResult:
    value: np.ndarray
    terms: int
    q_hat: float | None
    residual: float          # ||K^{M+1} rhs||, equal to ||(I - K) u_M - rhs||
    direct_residual: float   # the same quantity evaluated directly (has a roundoff floor)


def neumann_apply(chain_op: Op, rhs: np.ndarray, M: int | None = None, grid: GridSpec | None = None,
                  q_hat: float | None = None, check: bool = True) -> NeumannResult:
    """``sum_{k=0}^M K^k rhs`` with residual diagnostics.

    Raises :class:`ContractionFailure` when the estimated norm is at least
    0.95 (the solvers catch this and split the time interval).
    """
    rhs = np.asarray(rhs, dtype=complex)
    if grid is None:
        grid = _grid_of(chain_op, (chain_op,)) if not isinstance(chain_op, Identity) else None
    if chain_op.is_zero:
        zero = 0.0
        return NeumannResult(rhs.copy(), 0 if M is None else M, 0.0, zero, zero)
    if check and q_hat is None and grid is not None:
        q_hat = estimate_contraction(chain_op, grid)
    if check and q_hat is not None and q_hat >= Q_SPLIT:
        raise ContractionFailure(f"contraction estimate {q_hat:.3f} >= {Q_SPLIT}")
    if M is None:
        M = auto_terms(q_hat if q_hat is not None else 0.5)
    norm = (lambda h: history_norm(h, grid)) if grid is not None else (lambda h: float(np.linalg.norm(h)))
    acc = rhs.copy()
    term = rhs
    for _ in range(M):
        term = chain_op.apply(term)
        acc = acc + term
    tail = chain_op.apply(term)
    direct = acc - chain_op.apply(acc) - rhs
    return NeumannResult(acc, M, q_hat, norm(tail), norm(direct))


# -- data handling ------------------------------------------------------------

def _prepare(u0, f, m: int, grid: GridSpec):
    data = []
    for j in range(m):
        v = None if u0 is None else u0[j]
        data.append(np.zeros(grid.n_x, dtype=complex) if v is None else np.asarray(v, dtype=complex))
    forcing = []
    for j in range(m):
        v = None if f is None else f[j]
        if v is None:
            forcing.append(None)
        else:
            v = np.asarray(v, dtype=complex)
            if v.ndim == 1:
                v = np.broadcast_to(v, (grid.n_times, grid.n_x)).copy()
            if v.shape != (grid.n_times, grid.n_x):
                raise ValueError(f"forcing {j} has shape {v.shape}, expected {(grid.n_times, grid.n_x)}")
            forcing.append(v)
    return data, forcing


def coupling_symbol(A: SymbolMatrix, B: SymbolMatrix, i: int, j: int) -> Expr:
    return A[i, j] + B[i, j]


class _NeedsSplit(Exception):
    def __init__(self, row, q):
        super().__init__(f"row {row}: q_hat={q:.3f}")
        self.row = row
        self.q = q


@dataclass
class _Context:
    grid: GridSpec
    kernels: list
    ops_G: list
    ops_G0: list
    P: dict = field(default_factory=dict)


def _context(A, B, grid) -> _Context:
    kernels = build_diag_propagators(A, B, grid)
    G = [Integrated(k) for k in kernels]
    G0 = [Propagator(k) for k in kernels]
    ctx = _Context(grid, kernels, G, G0)
    for i in range(A.m):
        for j in range(A.m):
            if i == j:
                continue
            p = coupling_symbol(A, B, i, j)
            ctx.P[i, j] = Zero(grid) if p.is_zero else chain(G[i], SymbolOp(p, grid))
    return ctx


def _base_terms(ctx: _Context, data, forcing):
    """``U_i = G0_i u0_i + G_i f_i``."""
    out = []
    for i, (u0, fi) in enumerate(zip(data, forcing)):
        U = ctx.ops_G0[i].apply(u0)
        if fi is not None:
            U = U + ctx.ops_G[i].apply(fi)
        out.append(U)
    return out


def _invert(ctx, row, K: Op, rhs, M, q_bound, diag):
    q = estimate_contraction(K, ctx.grid) if not K.is_zero else 0.0
    if q >= q_bound:
        raise _NeedsSplit(row, q)
    res = neumann_apply(K, rhs, M if M is not None else auto_terms(q), ctx.grid, q_hat=q, check=False)
    diag["q_hat"][row] = q
    diag["neumann_residual"][row] = res.residual
    diag["neumann_direct_residual"][row] = res.direct_residual
    diag["M"][row] = res.terms
    return res.value


def _new_diag(m):
    return {"q_hat": [0.0] * m, "neumann_residual": [0.0] * m, "neumann_direct_residual": [0.0] * m,
            "M": [0] * m}


def _core_2x2(A, B, data, forcing, grid, M, q_bound):
    ctx = _context(A, B, grid)
    G1, G2 = ctx.ops_G
    c12 = SymbolOp(coupling_symbol(A, B, 0, 1), grid)
    b21 = SymbolOp(B[1, 0], grid)
    diag = _new_diag(2)
    U1, U2 = _base_terms(ctx, data, forcing)
    K1 = chain(G1, c12, G2, b21)
    K2 = chain(G2, b21, G1, c12)
    # the four right-hand-side groups summed before a single inversion per row
    rhs1 = U1 + chain(G1, c12).apply(U2)
    rhs2 = U2 + chain(G2, b21).apply(U1)
    u1 = _invert(ctx, 0, K1, rhs1, M, q_bound, diag)
    u2 = _invert(ctx, 1, K2, rhs2, M, q_bound, diag)
    return [u1, u2], ctx, diag


def _core_mxm(A, B, data, forcing, grid, M, q_bound):
    ctx = _context(A, B, grid)
    m = A.m
    P = ctx.P
    diag = _new_diag(m)
    U = _base_terms(ctx, data, forcing)
    W = {m - 1: U[m - 1]}
    Q = {(m - 1, j): P[m - 1, j] for j in range(m - 1)}
    for i in range(m - 2, -1, -1):
        K = op_sum(*[chain(P[i, k], Q[k, i]) for k in range(i + 1, m)])
        rhs = U[i]
        for k in range(i + 1, m):
            if not P[i, k].is_zero:
                rhs = rhs + P[i, k].apply(W[k])
        W[i] = _invert(ctx, i, K, rhs, M, q_bound, diag)
        if i == 0:
            Qi = {}
        else:
            N = NeumannInverse(K, diag["M"][i]) if not K.is_zero else Identity()
            Qi = {}
            for j in range(i):
                Gt = op_sum(P[i, j], *[chain(P[i, k], Q[k, j]) for k in range(i + 1, m)])
                Qi[j] = chain(N, Gt)
        for k in range(i + 1, m):
            if not Q[k, i].is_zero:
                W[k] = W[k] + Q[k, i].apply(W[i])
            for j in range(i):
                Q[k, j] = op_sum(Q[k, j], chain(Q[k, i], Qi[j]))
        for j in range(i):
            Q[i, j] = Qi[j]
    return [W[i] for i in range(m)], ctx, diag


def _run(core, A, B, u0, f, grid, M, s, check_hypotheses, force_split, max_split, q_bound=Q_SPLIT):
    if A.m != B.m:
        raise ValueError("A and B must have the same size")
    if check_hypotheses:
        rep = check_h1(B, grid)
        if not rep["passed"]:
            bad = [(k[0] + 1, k[1] + 1) for k, v in rep.items() if not isinstance(k, str) and not v.passed]
            raise H1Violation(f"lower-order condition fails for entries {bad}")
    data, forcing = _prepare(u0, f, A.m, grid)
    t_start = time.perf_counter()
    comps, diag = _split_solve(core, A, B, data, forcing, grid, M, 0, force_split, max_split, q_bound)
    diag["wall_time"] = time.perf_counter() - t_start
    fields = [ComponentField(c, grid, s + j, f"u{j + 1}") for j, c in enumerate(comps)]
    bundle = SolutionBundle(fields, grid, diag)
    return bundle


def _split_solve(core, A, B, data, forcing, grid, M, depth, force_split, max_split, q_bound):
    if force_split <= 0:
        try:
            comps, ctx, diag = core(A, B, data, forcing, grid, M, q_bound)
            diag["splits"] = depth
            diag["integral_residual"] = integral_residual(ctx, A, B, comps, data, forcing)
            return comps, diag
        except _NeedsSplit as exc:
            if depth >= max_split or grid.n_t < 2 or grid.n_t % 2:
                raise ContractionFailure(
                    f"contraction estimate {exc.q:.3f} >= {q_bound} for row {exc.row + 1} "
                    f"after {depth} interval splits") from None
    elif grid.n_t < 2 or grid.n_t % 2:
        raise ValueError("cannot split a time grid with an odd number of steps")
    half = grid.n_t // 2
    g1 = grid.sub_interval(0, half)
    g2 = grid.sub_interval(half, grid.n_t)
    f1 = [None if v is None else v[: half + 1] for v in forcing]
    f2 = [None if v is None else v[half:] for v in forcing]
    c1, d1 = _split_solve(core, A, B, data, f1, g1, M, depth + 1, force_split - 1, max_split, q_bound)
    mid = [c[-1] for c in c1]
    c2, d2 = _split_solve(core, A, B, mid, f2, g2, M, depth + 1, force_split - 1, max_split, q_bound)
    comps = [np.concatenate([a, b[1:]]) for a, b in zip(c1, c2)]
    diag = {
        "q_hat": [max(a, b) for a, b in zip(d1["q_hat"], d2["q_hat"])],
        "neumann_residual": [max(a, b) for a, b in zip(d1["neumann_residual"], d2["neumann_residual"])],
        "neumann_direct_residual": [max(a, b) for a, b in
                                    zip(d1["neumann_direct_residual"], d2["neumann_direct_residual"])],
        "M": [max(a, b) for a, b in zip(d1["M"], d2["M"])],
        "integral_residual": max(d1["integral_residual"], d2["integral_residual"]),
        "splits": max(d1["splits"], d2["splits"]),
    }
    return comps, diag


def solve_2x2(A: SymbolMatrix, B: SymbolMatrix, u0=None, f=None, grid: GridSpec | None = None,
              M: int | None = 8, s: float = 0.0, check_hypotheses: bool = True,
              force_split: int = 0, max_split: int = MAX_SPLIT) -> SolutionBundle:
    """Solve a 2x2 upper triangular system by the two-row representation.

    ``u0`` is a pair of initial data on the x-grid, ``f`` a pair of forcing
    histories ``(n_times, n_x)`` (``None`` entries mean zero).  ``M`` is the
    Neumann truncation (``None`` picks it from the contraction estimate).
    """
    grid = grid or GridSpec()
    if A.m != 2:
        raise ValueError("solve_2x2 needs m = 2")
    return _run(_core_2x2, A, B, u0, f, grid, M, s, check_hypotheses, force_split, max_split)


def solve_mxm(A: SymbolMatrix, B: SymbolMatrix, u0=None, f=None, grid: GridSpec | None = None,
              M: int | None = 8, s: float = 0.0, check_hypotheses: bool = True,
              force_split: int = 0, max_split: int = MAX_SPLIT) -> SolutionBundle:
    """Solve an m x m upper triangular system by descending substitution."""
    grid = grid or GridSpec()
    if A.m < 1:
        raise ValueError("empty system")
    return _run(_core_mxm, A, B, u0, f, grid, M, s, check_hypotheses, force_split, max_split)


# -- representation at the operator level -----------------------------------

def _add_maps(a: dict, b: dict) -> dict:
    out = dict(a)
    for key, op in b.items():
        out[key] = op_sum(out[key], op) if key in out else op
    return out


def _compose_map(op: Op, mp: dict) -> dict:
    return {key: chain(op, v) for key, v in mp.items() if not (op.is_zero or v.is_zero)}


def representation_operators(A: SymbolMatrix, B: SymbolMatrix, grid: GridSpec, M: int = 8) -> list[dict]:
    """Operators mapping each data source to each component.

    Returns a list over components ``j`` of dicts keyed by ``("u0", l)`` and
    ``("f", l)`` (zero-based ``l``).  The ``("u0", l)`` entry of component
    ``j`` has declared order at most ``l - j``.
    """
    ctx = _context(A, B, grid)
    m = A.m
    P = ctx.P
    U = [{("u0", i): ctx.ops_G0[i], ("f", i): ctx.ops_G[i]} for i in range(m)]
    W = {m - 1: U[m - 1]}
    Q = {(m - 1, j): P[m - 1, j] for j in range(m - 1)}
    for i in range(m - 2, -1, -1):
        K = op_sum(*[chain(P[i, k], Q[k, i]) for k in range(i + 1, m)])
        N = NeumannInverse(K, M) if not K.is_zero else Identity()
        rhs = U[i]
        for k in range(i + 1, m):
            rhs = _add_maps(rhs, _compose_map(P[i, k], W[k]))
        W[i] = _compose_map(N, rhs)
        Qi = {j: chain(N, op_sum(P[i, j], *[chain(P[i, k], Q[k, j]) for k in range(i + 1, m)]))
              for j in range(i)}
        for k in range(i + 1, m):
            W[k] = _add_maps(W[k], _compose_map(Q[k, i], W[i]))
            for j in range(i):
                Q[k, j] = op_sum(Q[k, j], chain(Q[k, i], Qi[j]))
        for j in range(i):
            Q[i, j] = Qi[j]
    reps = [W[i] for i in range(m)]
    for j, rep in enumerate(reps):
        for (kind, l), op in rep.items():
            if kind == "u0" and op.order > l - j + 1e-9:
                raise AssertionError(f"operator from u0_{l + 1} to u_{j + 1} has order {op.order} > {l - j}")
    return reps


def apply_representation(reps: list[dict], u0, f, grid: GridSpec) -> list[np.ndarray]:
    m = len(reps)
    data, forcing = _prepare(u0, f, m, grid)
    out = []
    for rep in reps:
        acc = np.zeros((grid.n_times, grid.n_x), dtype=complex)
        for (kind, l), op in rep.items():
            src = data[l] if kind == "u0" else forcing[l]
            if src is None:
                continue
            acc = acc + op.apply(src)
        out.append(acc)
    return out


# -- residuals ------------------------------------------------------------------

def integral_residual(ctx: _Context, A, B, comps, data, forcing) -> float:
    """Max over rows of ``||u_i - U_i - sum_j P_ij u_j||`` (discrete fixed-point residual)."""
    U = _base_terms(ctx, data, forcing)
    worst = 0.0
    for i in range(A.m):
        r = comps[i] - U[i]
        for j in range(A.m):
            if j != i and not ctx.P[i, j].is_zero:
                r = r - ctx.P[i, j].apply(comps[j])
        worst = max(worst, history_norm(r, ctx.grid))
    return worst


def pde_residual(bundle: SolutionBundle, A: SymbolMatrix, B: SymbolMatrix, f=None) -> list[float]:
    """Per row, max over time of ``||D_t u - (A + B) u - f||_{L2}``.

    ``D_t`` by second-order finite differences, the symbols by quadrature.
    """
    grid = bundle.grid
    u = [c.values for c in bundle.components]
    _, forcing = _prepare(None, f, A.m, grid)
    out = []
    for i in range(A.m):
        r = time_derivative(u[i], grid.dt)
        for j in range(A.m):
            p = A[i, j] + B[i, j]
            if not p.is_zero:
                r = r - symbol_history(p, u[j], grid)
        if forcing[i] is not None:
            r = r - grid.band_limit(forcing[i])
        out.append(float(np.max(np.sqrt(grid.dx) * np.linalg.norm(r, axis=-1))))
    return out
