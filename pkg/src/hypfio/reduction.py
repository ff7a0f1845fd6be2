"""
Reduction of m-th order equations

    D_t^m u = sum_{j<m} A_{m-j}(t, x, D) D_t^j u + f

to first order systems for ``u_k = D_t^{k-1} <D>^{m-k} u``.  The companion
matrix has ``<xi>`` on the superdiagonal and ``b_k = A_{m-k+1} <xi>^{k-m}``
in the last row; the homogeneous principal parts of the ``b_k`` go into
the principal matrix and the remainders into the lower order matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import H1Violation, RepresentationUnavailable
from .fio import apply_symbol, symbol_history
from .grid import ComponentField, GridSpec, SolutionBundle
from .hypotheses import SymbolMatrix, check_h2, estimate_order, sample_box
from .symbols import ONE, XI, ZERO, Expr, differentiate, elementary_symmetric, evaluate, jb, parse, power

ORDER_SLACK = 0.1


def _expr(e) -> Expr:
    if e is None:
        return ZERO
    return parse(e) if isinstance(e, str) else e


@dataclass
class HigherOrderProblem:
    """``D_t^m u = sum_{j<m} A_{m-j} D_t^j u + f`` with data ``D_t^{k-1} u(0) = g_k``.

    ``coeffs[l]`` holds ``A_l`` for ``l = 1..m`` (missing means zero).
    ``roots`` optionally records the characteristic roots the principal
    parts were built from.
    """

    m: int
    coeffs: dict = field(default_factory=dict)
    f: Expr | None = None
    data: list | None = None
    roots: list | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("order must be at least 1")
        self.coeffs = {int(l): _expr(e) for l, e in self.coeffs.items()}
        bad = [l for l in self.coeffs if not 1 <= l <= self.m]
        if bad:
            raise ValueError(f"coefficient indices {bad} outside 1..{self.m}")
        if self.f is not None:
            self.f = _expr(self.f)
        if self.roots is not None:
            self.roots = [_expr(r) for r in self.roots]

    def A(self, l: int) -> Expr:
        return self.coeffs.get(l, ZERO)

    @classmethod
    def from_roots(cls, roots, lower: dict | None = None, f=None, data=None) -> "HigherOrderProblem":
        """Principal parts from ``prod_i (tau - lam_i)``: ``A_k = (-1)^{k+1} e_k(lam)``."""
        roots = [_expr(r) for r in roots]
        m = len(roots)
        e = elementary_symmetric(roots)
        coeffs = {}
        for k in range(1, m + 1):
            c = e[k] if k % 2 == 1 else -e[k]
            if lower and k in lower:
                c = c + _expr(lower[k])
            coeffs[k] = c
        return cls(m, coeffs, f, data, roots)


def principal_part(A_l: Expr, l: int, grid: GridSpec | None = None) -> Expr:
    """Homogeneous order-``l`` part ``c(t, x) xi^l`` of a symbol polynomial in xi.

    Returns zero when ``A_l`` has order below ``l``.  Raises if the remainder
    does not drop at least one order.
    """
    if A_l.is_zero:
        return ZERO
    if estimate_order(A_l, grid) < l - 0.5:
        return ZERO
    d = A_l
    for _ in range(l):
        d = differentiate(d, "xi")
    c = d.subs(xi=0.0) * (1.0 / float(np.prod(np.arange(1, l + 1))))
    if c.depends_on("xi"):
        raise ValueError("principal coefficient depends on xi")
    princ = c * power(XI, l) if l > 0 else c
    rest = A_l - princ
    if not rest.is_zero and estimate_order(rest, grid) > l - 1 + ORDER_SLACK:
        raise ValueError(f"cannot split a homogeneous order-{l} part from {A_l}")
    return princ


@dataclass
class CompanionSystem:
    A: SymbolMatrix
    B: SymbolMatrix
    m: int

    def transform_data(self, g, grid: GridSpec) -> list[np.ndarray]:
        """``u_k(0) = <D>^{m-k} g_k``."""
        out = []
        for k in range(1, self.m + 1):
            gk = np.zeros(grid.n_x, dtype=complex) if g is None or g[k - 1] is None else np.asarray(g[k - 1])
            out.append(apply_symbol(power(jb(XI), self.m - k), gk, grid, check=False))
        return out

    def forcing(self, f: Expr | None, grid: GridSpec):
        """Forcing histories ``(0, ..., 0, f)``."""
        if f is None or f.is_zero:
            return None
        hist = np.asarray(evaluate(f, grid.times[:, None], grid.x[None, :], 0.0), dtype=complex)
        hist = np.broadcast_to(hist, (grid.n_times, grid.n_x)).copy()
        return [None] * (self.m - 1) + [hist]


def reduce(problem: HigherOrderProblem, grid: GridSpec | None = None) -> CompanionSystem:
    m = problem.m
    A = {}
    B = {}
    for k in range(1, m):
        A[(k - 1, k)] = jb(XI)
    for k in range(1, m + 1):
        l = m - k + 1
        A_l = problem.A(l)
        scale = power(jb(XI), k - m)
        princ = principal_part(A_l, l, grid)
        # principal part of b_k: c xi^l <xi>^{k-m}, order one
        A[(m - 1, k - 1)] = princ * scale if not princ.is_zero else ZERO
        B[(m - 1, k - 1)] = (A_l - princ) * scale if not (A_l - princ).is_zero else ZERO
    return CompanionSystem(SymbolMatrix(m, A, "lower"), SymbolMatrix(m, B, "lower"), m)


def _as_principal(S: SymbolMatrix) -> SymbolMatrix:
    return SymbolMatrix(S.m, dict(S.entries), "principal")


# -- triangularisation of the second order example ------------------------------

@dataclass
class Triangularized:
    A: SymbolMatrix
    B: SymbolMatrix
    T: SymbolMatrix
    T_inv: SymbolMatrix
    combination: Expr


def triangularize_2x2(a, b1=None, b2=None, b3=None, grid: GridSpec | None = None,
                      strict: bool = True, tol: float = 1e-10) -> Triangularized:
    """Conjugate the companion system of ``D_t^2 u = a^2 D_x^2 u + b1 D_x u + b2 D_t u + b3 u + f``.

    With ``T = [[1, 0], [-a xi / <xi>, 1]]`` the principal part becomes
    ``[[-a xi, <xi>], [0, a xi]]`` and the lower order matrix
    ``[[0, 0], [(b1 - b2 a + D_t a) xi / <xi> + b3 / <xi>, b2]]``.  The lower
    left entry has order -1 only if ``b1 - b2 a + D_t a`` vanishes; when it
    does not (beyond ``tol`` at sampled t) and ``strict`` is set,
    :class:`H1Violation` is raised.
    """
    a, b1, b2, b3 = (_expr(v) for v in (a, b1, b2, b3))
    for name, v in (("a", a), ("b1", b1), ("b2", b2), ("b3", b3)):
        if v.depends_on("x") or v.depends_on("xi"):
            raise ValueError(f"{name} must depend on t only")
    grid = grid or GridSpec()
    bracket = jb(XI)
    r = a * XI / bracket
    T = SymbolMatrix(2, {(0, 0): ONE, (1, 0): -r, (1, 1): ONE})
    T_inv = SymbolMatrix(2, {(0, 0): ONE, (1, 0): r, (1, 1): ONE})
    dta = differentiate(a, "t") * (-1j)
    comb = b1 - b2 * a + dta
    A_tri = SymbolMatrix(2, {(0, 0): -(a * XI), (0, 1): bracket, (1, 1): a * XI}, "principal")
    B_tri = SymbolMatrix(2, {(1, 0): comb * XI / bracket + b3 / bracket, (1, 1): b2})
    if strict:
        ts = np.linspace(grid.t0, grid.t0 + max(grid.t_final, 0.0), 33)
        worst = float(np.max(np.abs(evaluate(comb, ts, 0.0, 0.0))))
        if worst > tol:
            raise H1Violation(f"b1 - b2*a + D_t a is {worst:.3g} on the time grid; lower-left entry has order 0")
    return Triangularized(A_tri, B_tri, T, T_inv, comb)


def _wave_parameters(comp: CompanionSystem, grid: GridSpec):
    """Return ``a`` when the companion system is the m=2 wave form ``a^2 xi^2 / <xi>``."""
    if comp.m != 2 or not comp.A[1, 1].is_zero:
        return None
    e = comp.A[1, 0]
    if e.is_zero:
        return None
    c2 = (e * jb(XI)).subs(xi=1.0)
    if c2.depends_on("x"):
        return None
    t, x, xi = sample_box(grid, 64, 3)
    if np.max(np.abs(evaluate(e, t, x, xi) - evaluate(c2, t, x, 0.0) * xi**2 / np.sqrt(1 + xi**2))) > 1e-9:
        return None
    vals = evaluate(c2, np.linspace(grid.t0, grid.t0 + grid.t_final, 17), 0.0, 0.0)
    if np.any(np.abs(np.imag(vals)) > 1e-12) or np.any(np.real(vals) < 0):
        return None
    if c2.depends_on("t"):
        return None
    return parse(repr(float(np.sqrt(np.real(complex(evaluate(c2)))))))


# -- hypotheses -------------------------------------------------------------------

def _roots_numeric(problem: HigherOrderProblem, grid: GridSpec, n: int = 24, R: float = 2.0**10):
    """Roots of ``tau^m - sum A_(l) tau^{m-l}`` at sampled ``(t, x)`` and ``xi = +-R``."""
    princ = [principal_part(problem.A(l), l, grid) for l in range(1, problem.m + 1)]
    t, x, _ = sample_box(grid, n, 11)
    out = []
    for tk, xk in zip(t, x):
        for xi in (R, -R):
            coeffs = [1.0] + [-complex(evaluate(p, tk, xk, xi)) for p in princ]
            out.append((xi, np.roots(coeffs)))
    return out


def check_theorem_hypotheses(problem: HigherOrderProblem, grid: GridSpec | None = None) -> dict:
    """Check the assumptions of the well-posedness and representation results.

    Keys: ``real_roots``, ``roots_order_one``, ``lower_order`` (``A_l - A_(l)``
    of order at most 0), ``t_independent`` (principal parts), ``h2``
    (report over the roots), ``triangular`` (``"companion"``,
    ``"triangularized"`` or ``None``), ``well_posedness_path``,
    ``representation_path`` and ``witnesses``.
    """
    grid = grid or GridSpec()
    m = problem.m
    rep: dict = {"witnesses": {}}
    samples = _roots_numeric(problem, grid)
    worst_imag = max(float(np.max(np.abs(np.imag(r)) / (1 + np.abs(r)))) for _, r in samples)
    rep["real_roots"] = worst_imag <= 1e-6
    if problem.roots is not None:
        slopes = [estimate_order(r, grid) for r in problem.roots if not r.is_zero]
        rep["roots_order_one"] = all(abs(s - 1) <= ORDER_SLACK for s in slopes)
    else:
        ratios = [np.max(np.abs(r)) / abs(xi) for xi, r in samples]
        rep["roots_order_one"] = bool(np.all(np.isfinite(ratios)))
    lower_ok = True
    for l in range(1, m + 1):
        rest = problem.A(l) - principal_part(problem.A(l), l, grid)
        if not rest.is_zero:
            o = estimate_order(rest, grid)
            if o > ORDER_SLACK:
                lower_ok = False
                rep["witnesses"][f"A_{l}"] = o
    rep["lower_order"] = lower_ok
    rep["t_independent"] = not any(principal_part(problem.A(l), l, grid).depends_on("t") for l in range(1, m + 1))
    comp = reduce(problem, grid)
    if comp.A.is_upper_triangular():
        rep["triangular"] = "companion"
        lams = comp.A.diagonal()
    elif _wave_parameters(comp, grid) is not None:
        rep["triangular"] = "triangularized"
        c = _wave_parameters(comp, grid)
        lams = [-(c * XI), c * XI]
    else:
        rep["triangular"] = None
        lams = problem.roots
    if lams is not None and len(lams) > 1:
        h2 = check_h2(lams, grid)
        rep["h2"] = h2
        rep["h2_passed"] = bool(h2["passed"])
        for key, pair in h2.items():
            if isinstance(key, tuple) and pair.witnesses:
                rep["witnesses"][f"crossing {key[0] + 1},{key[1] + 1}"] = pair.witnesses
    else:
        rep["h2"] = None
        rep["h2_passed"] = True
    rep["well_posedness_path"] = bool(rep["real_roots"] and rep["roots_order_one"] and rep["lower_order"])
    rep["representation_path"] = bool(rep["well_posedness_path"] and rep["t_independent"]
                                      and rep["triangular"] is not None and rep["h2_passed"])
    rep["passed"] = rep["representation_path"]
    return rep


# -- solving ----------------------------------------------------------------------

@dataclass
class HigherOrderSolution:
    """``derivatives[j]`` holds ``D_t^j u`` over all grid times."""

    bundle: SolutionBundle
    derivatives: list
    path: str
    chain_orders: dict

    @property
    def u(self) -> ComponentField:
        return self.derivatives[0]


def _recovery_orders(A: SymbolMatrix, B: SymbolMatrix, grid: GridSpec, m: int, M: int) -> dict:
    """Declared orders of ``<D>^{j-m} o H_{j,l}``; each must be at most ``l - m``."""
    from .parametrix import SymbolOp, chain, representation_operators
    reps = representation_operators(A, B, grid, M)
    orders = {}
    for j, rep in enumerate(reps, start=1):
        rec = SymbolOp(power(jb(XI), j - m), grid, order=j - m)
        for (kind, l0), op in rep.items():
            if kind != "u0":
                continue
            l = l0 + 1
            o = chain(rec, op).order
            if o > l - m + 1e-9:
                raise AssertionError(f"recovery chain ({j},{l}) has order {o} > {l - m}")
            orders[(j, l)] = o
    return orders


def solve_higher_order(problem: HigherOrderProblem, grid: GridSpec | None = None, M: int = 8,
                       s: float = 0.0, bookkeeping: bool = True) -> HigherOrderSolution:
    """Solve through the companion system and recover ``D_t^{j-1} u = <D>^{j-m} u_j``.

    The companion matrix is used directly when it is upper triangular; the
    second order wave form ``D_t^2 u = c^2 D_x^2 u + ...`` with constant ``c``
    is triangularized first.  Anything else raises
    :class:`RepresentationUnavailable`.
    """
    from .parametrix import solve_mxm
    grid = grid or GridSpec()
    m = problem.m
    comp = reduce(problem, grid)
    if comp.A.depends_on("t"):
        raise RepresentationUnavailable("principal part depends on t")
    u0 = comp.transform_data(problem.data, grid)
    forcing = comp.forcing(problem.f, grid)
    if comp.A.is_upper_triangular():
        A = _as_principal(comp.A)
        bundle = solve_mxm(A, comp.B, u0, forcing, grid, M, s=s)
        comps = [c.values for c in bundle.components]
        path = "companion"
        solved = (A, comp.B)
    else:
        c = _wave_parameters(comp, grid)
        if c is None:
            raise RepresentationUnavailable("companion matrix is not upper triangular and not of wave form")
        b2 = comp.B[1, 1]
        low = comp.B[1, 0]
        # recover b1 D_x + b3 from the lower-left entry (b1 xi + b3) / <xi>
        lowxi = (low * jb(XI))
        b1 = differentiate(lowxi, "xi").subs(xi=0.0)
        b3 = lowxi.subs(xi=0.0)
        for v in (b1, b2, b3):
            if v.depends_on("x") or v.depends_on("xi"):
                raise RepresentationUnavailable("lower order terms must depend on t only")
        tri = triangularize_2x2(c, b1, b2, b3, grid)
        v0 = [u0[0], apply_symbol(tri.T_inv[1, 0], u0[0], grid, check=False) + u0[1]]
        vf = None
        if forcing is not None:
            vf = [None, forcing[1]]
        bundle = solve_mxm(tri.A, tri.B, v0, vf, grid, M, s=s)
        V = [cpt.values for cpt in bundle.components]
        comps = [V[0], symbol_history(tri.T[1, 0], V[0], grid) + V[1]]
        path = "triangularized"
        solved = (tri.A, tri.B)
    derivs = []
    for j in range(1, m + 1):
        vals = symbol_history(power(jb(XI), j - m), comps[j - 1], grid)
        derivs.append(ComponentField(vals, grid, s + m - 1, f"D_t^{j - 1} u"))
    orders = _recovery_orders(*solved, grid, m, M) if bookkeeping else {}
    bundle.diagnostics["path"] = path
    return HigherOrderSolution(bundle, derivs, path, orders)
