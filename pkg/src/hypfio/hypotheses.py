"""
Symbol matrices, order estimation and the checkers for the lower-order
condition (entries below the diagonal lose one order per step) and the
multiplicity condition (iterated Poisson brackets do not vanish where two
eigenvalues cross).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec
from .symbols import ZERO, Expr, evaluate, iterated_bracket, parse

XI_RAY = 2.0 ** np.arange(4, 15)
SLOPE_SLACK = 0.1
BRACKET_TOL = 1e-8
DEFAULT_M_MAX = 4


def mult_tol(lj, lk):
    return 1e-8 * (1.0 + np.abs(lj) + np.abs(lk))


@dataclass
class SymbolMatrix:
    """Square matrix of symbols.

    ``kind`` is ``"principal"`` (order one, upper triangular with real
    diagonal) or ``"lower"`` (order zero).  Missing entries are zero.
    """

    m: int
    entries: dict = field(default_factory=dict)
    kind: str = "lower"

    def __post_init__(self):
        clean = {}
        for (i, j), e in self.entries.items():
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise IndexError(f"entry ({i},{j}) outside {self.m}x{self.m}")
            e = parse(e) if isinstance(e, str) else e
            if not e.is_zero:
                clean[(i, j)] = e
        self.entries = clean
        if self.kind not in ("principal", "lower"):
            raise ValueError("kind must be 'principal' or 'lower'")
        if self.kind == "principal":
            bad = [(i, j) for (i, j) in self.entries if i > j]
            if bad:
                raise ValueError(f"principal matrix must be upper triangular; nonzero {bad}")

    @classmethod
    def from_rows(cls, rows, kind="lower") -> "SymbolMatrix":
        m = len(rows)
        entries = {}
        for i, row in enumerate(rows):
            if len(row) != m:
                raise ValueError("matrix rows must be square")
            for j, e in enumerate(row):
                entries[(i, j)] = parse(e) if isinstance(e, str) else e
        return cls(m, entries, kind)

    @classmethod
    def zeros(cls, m, kind="lower"):
        return cls(m, {}, kind)

    def __getitem__(self, ij) -> Expr:
        return self.entries.get(tuple(ij), ZERO)

    def diagonal(self) -> list[Expr]:
        return [self[i, i] for i in range(self.m)]

    def rows(self) -> list[list[Expr]]:
        return [[self[i, j] for j in range(self.m)] for i in range(self.m)]

    def is_upper_triangular(self) -> bool:
        return all(i <= j for (i, j) in self.entries)

    def depends_on(self, var: str) -> bool:
        return any(e.depends_on(var) for e in self.entries.values())

    def evaluate(self, t, x, xi) -> np.ndarray:
        """Numeric matrices with shape ``broadcast(t, x, xi) + (m, m)``."""
        shape = np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(xi))
        out = np.zeros(shape + (self.m, self.m), dtype=complex)
        for (i, j), e in self.entries.items():
            out[..., i, j] = evaluate(e, t, x, xi)
        return out

    def check_real_diagonal(self, grid: GridSpec, n: int = 200, seed: int = 0) -> float:
        """Max imaginary part of the diagonal over random box samples."""
        t, x, xi = sample_box(grid, n, seed)
        worst = 0.0
        for e in self.diagonal():
            worst = max(worst, float(np.max(np.abs(np.imag(evaluate(e, t, x, xi))))))
        return worst

    def to_json(self) -> list[list[str]]:
        return [[str(e) for e in row] for row in self.rows()]


def sample_box(grid: GridSpec, n: int, seed: int = 0, xi_max: float | None = None):
    rng = np.random.default_rng(seed)
    t = rng.uniform(grid.t0, grid.t0 + grid.t_final, n) if grid.t_final > 0 else np.full(n, grid.t0)
    x = rng.uniform(grid.x_min, grid.x_max, n)
    top = grid.xi_max if xi_max is None else xi_max
    xi = rng.uniform(-top, top, n)
    return t, x, xi


def ray_slope(expr: Expr, t: float, x: float, rays=XI_RAY, sign: float = 1.0) -> float:
    """Log-log slope of ``|expr|`` along ``xi = sign * rays`` at fixed ``(t, x)``."""
    vals = np.abs(evaluate(expr, t, x, sign * rays))
    if np.all(vals <= 1e-300):
        return -np.inf
    vals = np.maximum(vals, 1e-300)
    return float(np.polyfit(np.log(rays), np.log(vals), 1)[0])


def estimate_order(expr: Expr, grid: GridSpec | None = None, n_points: int = 10,
                   seed: int = 0, rays=XI_RAY) -> float:
    """Largest fitted ray slope over random ``(t, x)`` and both xi signs."""
    if expr.is_zero:
        return -np.inf
    grid = grid or GridSpec()
    t, x, _ = sample_box(grid, n_points, seed)
    return max(ray_slope(expr, tk, xk, rays, s) for tk, xk in zip(t, x) for s in (1.0, -1.0))


def symbol_order(expr: Expr, grid: GridSpec | None = None) -> float:
    """Declared order if present, otherwise the fitted order rounded to an integer."""
    if expr.is_zero:
        return -np.inf
    if expr.declared_order is not None:
        return float(expr.declared_order)
    return float(np.round(estimate_order(expr, grid)))


@dataclass
class H1Entry:
    i: int
    j: int
    slope: float
    allowed: float
    passed: bool


def check_h1(B: SymbolMatrix, grid: GridSpec, n_points: int = 10, seed: int = 0) -> dict:
    """Sample every entry along rays ``xi = 2^4..2^14`` and compare fitted slopes.

    Entry ``(i, j)`` may have order ``min(0, j - i)``; it passes when the
    worst fitted slope is at most that plus 0.1.  Returns a mapping
    ``(i, j) -> H1Entry`` (zero-based indices) with an extra ``"passed"`` key.
    """
    t, x, _ = sample_box(grid, n_points, seed)
    report = {}
    ok = True
    for (i, j), e in sorted(B.entries.items()):
        slope = max(ray_slope(e, tk, xk, XI_RAY, s) for tk, xk in zip(t, x) for s in (1.0, -1.0))
        allowed = float(min(0, j - i))
        passed = bool(slope <= allowed + SLOPE_SLACK)
        ok &= passed
        report[(i, j)] = H1Entry(i, j, slope, allowed, passed)
    report["passed"] = ok
    return report


@dataclass
class H2Pair:
    j: int
    k: int
    status: str  # identical | disjoint | pass | fail
    n: int | None = None
    witnesses: list = field(default_factory=list)

    def label(self) -> str:
        if self.status in ("pass", "fail"):
            return f"{self.status}({self.n})"
        return self.status


def _crossings(diff_fn, xs: np.ndarray, tol_fn) -> list[float]:
    """Roots of a real 1D function: exact near-zeros plus bisected sign changes."""
    vals = diff_fn(xs)
    roots = []
    near = np.abs(vals) <= tol_fn(xs)
    for i in np.nonzero(near)[0]:
        roots.append(float(xs[i]))
    sign = np.sign(vals)
    for i in np.nonzero((sign[:-1] * sign[1:]) < 0)[0]:
        if near[i] or near[i + 1]:
            continue
        a, b = xs[i], xs[i + 1]
        fa = vals[i]
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = diff_fn(np.array([mid]))[0]
            if np.sign(fm) == np.sign(fa):
                a, fa = mid, fm
            else:
                b = mid
            if b - a < 1e-15 * (1 + abs(mid)):
                break
        roots.append(float(0.5 * (a + b)))
    roots.sort()
    dedup = []
    for r in roots:
        if not dedup or abs(r - dedup[-1]) > 1e-9 * (1 + abs(r)):
            dedup.append(r)
    return dedup


def check_h2(lams: list[Expr], grid: GridSpec, m_max: int = DEFAULT_M_MAX,
             n_identity: int = 1000, n_scan: int = 4097, seed: int = 0, t: float | None = None) -> dict:
    """Classify each eigenvalue pair and find the bracket depth at crossings.

    Crossings are searched in ``x`` at ``xi = 1`` (the eigenvalues are
    assumed degree-one homogeneous, so this covers every xi > 0 ray).
    Returns ``(j, k) -> H2Pair`` plus ``"passed"`` and ``"max_n"`` keys.
    """
    t_eval = grid.t0 if t is None else t
    rng = np.random.default_rng(seed)
    ts = np.full(n_identity, t_eval)
    xs = rng.uniform(grid.x_min, grid.x_max, n_identity)
    xis = rng.uniform(-grid.xi_max, grid.xi_max, n_identity)
    scan = np.linspace(grid.x_min, grid.x_max, n_scan)
    report = {}
    ok = True
    max_n = 0
    for j in range(len(lams)):
        for k in range(j + 1, len(lams)):
            lj, lk = lams[j], lams[k]
            vj = evaluate(lj, ts, xs, xis)
            vk = evaluate(lk, ts, xs, xis)
            if np.all(np.abs(vj - vk) <= mult_tol(vj, vk)):
                report[(j, k)] = H2Pair(j, k, "identical")
                continue

            def diff_fn(xv, lj=lj, lk=lk):
                return np.real(evaluate(lj, t_eval, xv, 1.0) - evaluate(lk, t_eval, xv, 1.0))

            def tol_fn(xv, lj=lj, lk=lk):
                return mult_tol(evaluate(lj, t_eval, xv, 1.0), evaluate(lk, t_eval, xv, 1.0))

            roots = _crossings(diff_fn, scan, tol_fn)
            if not roots:
                report[(j, k)] = H2Pair(j, k, "disjoint")
                continue
            brackets = [iterated_bracket(lj, lk, n) for n in range(1, m_max + 1)]
            needed = 0
            failed = False
            for r in roots:
                depth = None
                for n, h in enumerate(brackets, start=1):
                    if abs(evaluate(h, t_eval, r, 1.0)) > BRACKET_TOL:
                        depth = n
                        break
                if depth is None:
                    failed = True
                else:
                    needed = max(needed, depth)
            if failed:
                report[(j, k)] = H2Pair(j, k, "fail", m_max, roots)
                ok = False
            else:
                report[(j, k)] = H2Pair(j, k, "pass", needed, roots)
                max_n = max(max_n, needed)
    report["passed"] = ok
    report["max_n"] = max_n
    return report
