"""
Prediction of singularities by broken bicharacteristic flows and their
numerical detection by a windowed-FFT decay indicator.

With ``D_t = lam(x, D)`` a singularity at ``(y, eta)`` travels along the
time-reversed flow of ``lam``: ``dx/dt = -d_xi lam``, ``dxi/dt = d_x lam``
(a jump in ``u0`` at ``x0`` sits at ``x0 - c t`` for ``lam = c xi``).
A branch follows ``lam_{j1}``, may switch to ``lam_{j2} != lam_{j1}`` at a
break time, and so on; the predicted set at time ``t`` collects the end
points of all branches of up to ``depth`` breaks.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BranchExplosion
from .flow import hamiltonian_flow
from .grid import ComponentField, GridSpec, SolutionBundle
from .hypotheses import mult_tol
from .symbols import Expr, evaluate

SINGULAR_THRESHOLD = 3.0
SMOOTH_THRESHOLD = 6.0
DEFAULT_RADIUS = 24
FIT_BAND = (0.25, 0.5)
FLOOR = 1e-12
MAX_BRANCHES = 100_000


# -- data types --------------------------------------------------------------

@dataclass
class WavefrontPoint:
    """A predicted or detected singular point.

    ``branch`` lists zero-based eigenvalue indices in the order they were
    followed.  ``x_lo``/``x_hi`` bound the positions swept by the branch
    family (equal to ``x`` for isolated points).
    """

    x: float
    xi_sign: int
    branch: tuple = ()
    strength_order: float = np.nan
    x_lo: float | None = None
    x_hi: float | None = None
    xi: float | None = None

    def __post_init__(self):
        if self.x_lo is None:
            self.x_lo = self.x
        if self.x_hi is None:
            self.x_hi = self.x

    @property
    def label(self) -> str:
        return "-".join(str(j + 1) for j in self.branch)


@dataclass
class WavefrontSet:
    points: list = field(default_factory=list)
    grid: GridSpec | None = None
    t: float = 0.0
    truncated: bool = False

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def positions(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    def contains(self, x: float, margin: float = 0.0, sign: int | None = None) -> bool:
        """Whether ``x`` lies within ``margin`` of some point or swept interval (periodically)."""
        shifts = (0.0,) if self.grid is None else (0.0, self.grid.length, -self.grid.length)
        for p in self.points:
            if sign is not None and p.xi_sign != sign:
                continue
            for s in shifts:
                if p.x_lo - margin <= x + s <= p.x_hi + margin:
                    return True
        return False

    def distance(self, x: float) -> float:
        """Periodic distance from ``x`` to the nearest point or interval."""
        best = np.inf
        shifts = (0.0,) if self.grid is None else (0.0, self.grid.length, -self.grid.length)
        for p in self.points:
            for s in shifts:
                y = x + s
                d = 0.0 if p.x_lo <= y <= p.x_hi else min(abs(y - p.x_lo), abs(y - p.x_hi))
                best = min(best, d)
        return best

    def union(self, other: "WavefrontSet") -> "WavefrontSet":
        return WavefrontSet(self.points + other.points, self.grid or other.grid, self.t,
                            self.truncated or other.truncated)

    def dedup(self, cell: float) -> "WavefrontSet":
        """Keep one point per (grid cell, sign, interval), preferring the shortest branch."""
        seen = {}
        for p in sorted(self.points, key=lambda q: len(q.branch)):
            key = (p.xi_sign, int(np.floor(p.x / cell + 0.5)), int(np.floor(p.x_lo / cell + 0.5)),
                   int(np.floor(p.x_hi / cell + 0.5)))
            seen.setdefault(key, p)
        return WavefrontSet(list(seen.values()), self.grid, self.t, self.truncated)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["branch", "t", "x", "xi_sign", "strength_order", "x_lo", "x_hi"])
        for p in self.points:
            w.writerow([p.label, f"{self.t:.12g}", f"{p.x:.12g}", p.xi_sign, f"{p.strength_order:.6g}",
                        f"{p.x_lo:.12g}", f"{p.x_hi:.12g}"])
        return buf.getvalue()


# -- smoothness indicator -----------------------------------------------------

def _periodic_offset(x, c, length):
    return (x - c + 0.5 * length) % length - 0.5 * length


def _window(grid: GridSpec, centers, radius: int) -> np.ndarray:
    sigma = radius * grid.dx / 3.0
    d = _periodic_offset(grid.x[None, :], np.asarray(centers, dtype=float)[:, None], grid.length)
    return np.exp(-0.5 * (d / sigma) ** 2)


def _decay(u: np.ndarray, grid: GridSpec, centers, radius: int):
    """Per-center exponents for xi > 0 and xi < 0, and band energy."""
    u = np.asarray(u, dtype=complex)
    chi = _window(grid, centers, radius)
    spec = np.abs(np.fft.fft(chi * u[None, :], axis=-1)) * grid.dx
    ref = max(float(np.max(np.abs(u))), 1e-300) * chi.sum(axis=-1, keepdims=True) * grid.dx
    xi = grid._fft_xi
    lo, hi = FIT_BAND[0] * grid.xi_max, FIT_BAND[1] * grid.xi_max
    out = {}
    energy = np.zeros(len(centers))
    for sign in (1, -1):
        sel = np.nonzero(sign * xi > 0)[0]
        sel = sel[np.argsort(np.abs(xi[sel]))]
        s = spec[:, sel]
        mag = np.abs(xi[sel])
        band = (mag >= lo) & (mag <= hi)
        e = np.maximum.accumulate(s[:, band][:, ::-1], axis=1)[:, ::-1]
        X = np.log(np.sqrt(1 + mag[band] ** 2))
        w = (e > FLOOR * ref).astype(float)
        n = w.sum(axis=1)
        Y = np.log(np.maximum(e, 1e-300))
        xm = (w * X).sum(axis=1) / np.maximum(n, 1)
        ym = (w * Y).sum(axis=1) / np.maximum(n, 1)
        sxx = (w * (X - xm[:, None]) ** 2).sum(axis=1)
        sxy = (w * (X - xm[:, None]) * (Y - ym[:, None])).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(sxx > 0, sxy / sxx, 0.0)
        expo = np.where(n >= 3, -slope, np.inf)
        out[sign] = expo
        energy += (s[:, (mag >= lo) & (mag <= hi)] ** 2).sum(axis=1)
    return out, energy


def _field_values(u, t=None):
    if isinstance(u, ComponentField):
        return u.values[-1] if t is None else u.at(t)
    return np.asarray(u, dtype=complex)


def smoothness_indicator(u, x0: float, grid: GridSpec, radius: int = DEFAULT_RADIUS,
                         by_sign: bool = False):
    """Local decay exponent of ``|F(chi u)|`` against ``log <xi>`` at ``x0``.

    ``chi`` is a Gaussian of width ``radius * dx / 3`` (negligible beyond
    ``radius`` cells).  The fit uses the monotone envelope over
    ``[0.25, 0.5] xi_max`` (taken within that band), truncated where it falls below ``1e-12`` of the
    largest possible value; ``inf`` means no measurable content in the band.
    Returns the smaller of the two one-sided exponents, or a dict by sign.
    """
    if radius < 8:
        raise ValueError("window radius must be at least 8 grid cells")
    expo, _ = _decay(_field_values(u), grid, [x0], radius)
    if by_sign:
        return {s: float(expo[s][0]) for s in (1, -1)}
    return float(min(expo[1][0], expo[-1][0]))


@dataclass
class ScanResult:
    centers: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    energy: np.ndarray

    @property
    def exponent(self) -> np.ndarray:
        return np.minimum(self.pos, self.neg)


def scan(u, grid: GridSpec, radius: int = DEFAULT_RADIUS, centers=None) -> ScanResult:
    """Indicator at every grid point whose window fits inside the box."""
    if centers is None:
        centers = grid.x[radius:grid.n_x - radius + 1]
    centers = np.asarray(centers, dtype=float)
    expo, energy = _decay(_field_values(u), grid, centers, radius)
    return ScanResult(centers, expo[1], expo[-1], energy)


def singular_points(u, grid: GridSpec, radius: int = DEFAULT_RADIUS,
                    threshold: float = SINGULAR_THRESHOLD, component: int = 0) -> WavefrontSet:
    """Localised singular points: band-energy peaks inside runs of low exponent."""
    res = scan(u, grid, radius)
    flag = res.exponent <= threshold
    pts = []
    i = 0
    n = len(flag)
    while i < n:
        if not flag[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and flag[j + 1]:
            j += 1
        E = res.energy
        top = E[i:j + 1].max()
        for c in range(i, j + 1):
            left = E[c - 1] if c > 0 else -np.inf
            right = E[c + 1] if c + 1 < n else -np.inf
            # genuine maxima of the band energy only, not run boundaries on a tail
            if E[c] >= left and E[c] >= right and E[c] >= 1e-2 * top:
                for sign, arr in ((1, res.pos), (-1, res.neg)):
                    if arr[c] <= threshold:
                        pts.append(WavefrontPoint(float(res.centers[c]), sign, (component,), float(arr[c])))
        i = j + 1
    return WavefrontSet(pts, grid)


def seed_wavefront(u0, grid: GridSpec, radius: int = DEFAULT_RADIUS,
                   threshold: float = SINGULAR_THRESHOLD) -> WavefrontSet:
    """Singular points of each data component; the branch records the component."""
    if isinstance(u0, np.ndarray) and u0.ndim == 1:
        u0 = [u0]
    out = WavefrontSet([], grid)
    for j, u in enumerate(u0):
        if u is None:
            continue
        out = out.union(singular_points(u, grid, radius, threshold, component=j))
    return out


# -- propagation ----------------------------------------------------------------

def _neg(lam: Expr) -> Expr:
    return -lam


def _identical(lj: Expr, lk: Expr, grid: GridSpec | None) -> bool:
    rng = np.random.default_rng(0)
    lo, hi = (grid.x_min, grid.x_max) if grid is not None else (-10.0, 10.0)
    x = rng.uniform(lo, hi, 200)
    xi = rng.uniform(-50, 50, 200)
    a, b = evaluate(lj, 0.0, x, xi), evaluate(lk, 0.0, x, xi)
    return bool(np.all(np.abs(a - b) <= mult_tol(a, b)))


@dataclass
class _Branch:
    x: float
    xi: float
    tau: float
    seq: tuple
    origin: WavefrontPoint


def _step(lam_neg: Expr, x, xi, tau, h, sub):
    return hamiltonian_flow(lam_neg, h, x, xi, t0=tau, n_steps=sub)


def propagate_wavefront(seed: WavefrontSet, lams: list, t: float, depth: int = 1,
                        breaks: str = "crossings", grid: GridSpec | None = None,
                        n_simplex: int = 32, n_steps: int = 512, max_branches: int = MAX_BRANCHES,
                        initial_breaks: bool = True) -> WavefrontSet:
    """Broken-flow prediction of singular points at time ``t``.

    ``breaks="crossings"`` switches eigenvalue at the initial time and where
    the trajectory crosses the multiplicity set of the current and the new
    eigenvalue (a break at the final time is the unbroken prefix);
    ``breaks="anywhere"`` allows switches at every node of an
    ``n_simplex``-point grid of break times and reports, for every index
    sequence, the interval swept by its end points.
    Seed points carry their data component as the first branch index.
    ``initial_breaks=False`` drops the switch at the initial time in
    crossings mode, leaving only genuine multiplicity crossings.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if breaks not in ("crossings", "anywhere"):
        raise ValueError("breaks must be 'crossings' or 'anywhere'")
    grid = grid or seed.grid
    m = len(lams)
    negs = [_neg(l) for l in lams]
    same = {(j, k): _identical(lams[j], lams[k], grid) for j in range(m) for k in range(m) if j != k}
    if breaks == "crossings":
        pts, truncated = _crossing_branches(seed, lams, negs, same, t, depth, n_steps, max_branches,
                                              initial_breaks)
    else:
        pts, truncated = _anywhere_branches(seed, negs, same, t, depth, n_simplex, max_branches)
    if grid is not None:
        for p in pts:
            shift = np.floor((p.x - grid.x_min) / grid.length) * grid.length
            p.x -= shift
            p.x_lo -= shift
            p.x_hi -= shift
    out = WavefrontSet(pts, grid, t, truncated)
    return out.dedup(grid.dx) if grid is not None else out


def _crossing_branches(seed, lams, negs, same, t, depth, n_steps, max_branches,
                                              initial_breaks):
    m = len(lams)
    h = t / n_steps if t > 0 else 0.0
    queue = []
    for p in seed:
        c = p.branch[0] if p.branch else 0
        xi0 = float(p.xi if p.xi is not None else p.xi_sign)
        queue.append(_Branch(p.x, xi0, 0.0, (c,), p))
        if depth >= 1 and initial_breaks:
            # break at the initial time: the seed also travels along every other flow
            for j in range(m):
                if j != c and not same[(c, j)]:
                    queue.append(_Branch(p.x, xi0, 0.0, (c, j), p))
    out = []
    count = len(queue)
    truncated = False
    while queue:
        b = queue.pop()
        j = b.seq[-1]
        x, xi, tau = b.x, b.xi, b.tau
        while tau < t - 1e-14:
            step = min(h, t - tau)
            x1, xi1 = _step(negs[j], np.array([x]), np.array([xi]), tau, step, 4)
            x1, xi1 = float(x1[0]), float(xi1[0])
            if len(b.seq) <= depth:
                for k in range(m):
                    if k == j or same[(j, k)]:
                        continue
                    d0 = float(np.real(evaluate(lams[j] - lams[k], tau, x, xi)))
                    d1 = float(np.real(evaluate(lams[j] - lams[k], tau + step, x1, xi1)))
                    tol = float(mult_tol(evaluate(lams[j], tau, x, xi), evaluate(lams[k], tau, x, xi)))
                    z0, z1 = abs(d0) <= tol, abs(d1) <= tol
                    if z0 and not z1:
                        # leaving the multiplicity set: only branch from a seed sitting on it
                        if not (tau == b.tau == 0.0):
                            continue
                        w = 0.0
                    elif z1 and not z0:
                        w = 1.0
                    elif d0 * d1 < 0 and not z0:
                        w = d0 / (d0 - d1)
                    else:
                        continue
                    count += 1
                    if count > max_branches:
                        truncated = True
                        continue
                    queue.append(_Branch(x + w * (x1 - x), xi + w * (xi1 - xi), tau + w * step,
                                         b.seq + (k,), b.origin))
            x, xi, tau = x1, xi1, tau + step
        out.append(WavefrontPoint(x, int(np.sign(xi)) or b.origin.xi_sign, b.seq,
                                  b.origin.strength_order, xi=xi))
    if truncated:
        warnings.warn(f"branch count exceeded {max_branches}; prediction truncated", BranchExplosion,
                      stacklevel=3)
    return out, truncated


def _anywhere_branches(seed, negs, same, t, depth, n_simplex, max_branches):
    m = len(negs)
    taus = np.linspace(0.0, t, n_simplex + 1)
    sub = 8
    # level 0: one branch per seed point starting at tau = 0
    x = np.array([p.x for p in seed], dtype=float)
    xi = np.array([float(p.xi if p.xi is not None else p.xi_sign) for p in seed])
    seqs = [(p.branch[0] if p.branch else 0,) for p in seed]
    start = np.zeros(len(seed), dtype=int)
    origin = list(seed)
    families: dict = {}
    truncated = False
    total = len(seqs)
    for level in range(depth + 1):
        if not seqs:
            break
        n_b = len(seqs)
        traj_x = np.empty((n_b, n_simplex + 1))
        traj_xi = np.empty((n_b, n_simplex + 1))
        cur_x, cur_xi = x.copy(), xi.copy()
        last = np.array([s[-1] for s in seqs])
        for i in range(n_simplex + 1):
            traj_x[:, i], traj_xi[:, i] = cur_x, cur_xi
            if i == n_simplex:
                break
            for j in range(m):
                sel = (last == j) & (start <= i)
                if np.any(sel):
                    nx, nxi = _step(negs[j], cur_x[sel], cur_xi[sel], taus[i], taus[i + 1] - taus[i], sub)
                    cur_x[sel], cur_xi[sel] = nx, nxi
        for b in range(n_b):
            key = (seqs[b], id(origin[b]))
            fam = families.setdefault(key, [seqs[b], origin[b], []])
            fam[2].append((cur_x[b], cur_xi[b]))
        if level == depth:
            break
        new_x, new_xi, new_seq, new_start, new_origin = [], [], [], [], []
        for b in range(n_b):
            j = seqs[b][-1]
            for k in range(m):
                if k == j or same[(j, k)]:
                    continue
                for i in range(start[b], n_simplex + 1):
                    total += 1
                    if total > max_branches:
                        truncated = True
                        break
                    new_x.append(traj_x[b, i])
                    new_xi.append(traj_xi[b, i])
                    new_seq.append(seqs[b] + (k,))
                    new_start.append(i)
                    new_origin.append(origin[b])
        x, xi = np.array(new_x), np.array(new_xi)
        seqs, start, origin = new_seq, np.array(new_start, dtype=int), new_origin
    if truncated:
        warnings.warn(f"branch count exceeded {max_branches}; prediction truncated", BranchExplosion,
                      stacklevel=3)
    pts = []
    for seq, orig, ends in families.values():
        xs = np.array([e[0] for e in ends])
        signs = np.sign([e[1] for e in ends]).astype(int)
        for sgn in sorted(set(signs.tolist())):
            sel = xs[signs == sgn]
            lo, hi = float(sel.min()), float(sel.max())
            pts.append(WavefrontPoint(0.5 * (lo + hi), sgn or orig.xi_sign, seq, orig.strength_order, lo, hi))
    return pts, truncated


# -- verification -------------------------------------------------------------------

def verify_prediction(bundle, predicted: WavefrontSet, t: float | None = None, grid: GridSpec | None = None,
                      components=None, radius: int = DEFAULT_RADIUS,
                      singular_threshold: float = SINGULAR_THRESHOLD,
                      smooth_threshold: float = SMOOTH_THRESHOLD, margin_cells: float = 1.0) -> dict:
    """Compare detected singular points with a prediction.

    ``bundle`` is a :class:`SolutionBundle`, a field, or a list of arrays at
    time ``t``.  Checks: (i) every detected singular point lies within
    ``margin_cells`` of the prediction; (ii) every probe point at least three
    window radii from all predictions has exponent ``>= smooth_threshold``.
    Predicted points that are not detected are listed but do not fail the
    report (containment only goes one way).
    """
    if isinstance(bundle, SolutionBundle):
        grid = grid or bundle.grid
        fields = [c.values[-1] if t is None else c.at(t) for c in bundle.components]
    elif isinstance(bundle, ComponentField):
        grid = grid or bundle.grid
        fields = [_field_values(bundle, t)]
    else:
        fields = [np.asarray(v) for v in (bundle if isinstance(bundle, (list, tuple)) else [bundle])]
    if grid is None:
        raise ValueError("grid required")
    comps = range(len(fields)) if components is None else components
    margin = margin_cells * grid.dx
    min_probe = 3 * radius * grid.dx
    report = {"components": {}, "passed": True}
    for j in comps:
        u = fields[j]
        found = singular_points(u, grid, radius, singular_threshold, component=j)
        outside = [p.x for p in found if not predicted.contains(p.x, margin)]
        confirmed, missed = [], []
        for p in predicted:
            for xq in {p.x_lo, p.x_hi, p.x}:
                if grid.x_min + radius * grid.dx <= xq <= grid.x_max - radius * grid.dx:
                    e = smoothness_indicator(u, xq, grid, radius)
                    (confirmed if e <= singular_threshold else missed).append((xq, e))
        res = scan(u, grid, radius)
        far = np.array([predicted.distance(c) >= min_probe for c in res.centers]) if len(predicted) else \
            np.ones(len(res.centers), dtype=bool)
        probe_fail = [(float(c), float(e)) for c, e, f in zip(res.centers, res.exponent, far)
                      if f and e < smooth_threshold]
        ok = not outside and not probe_fail
        report["components"][j] = {
            "singular": [(p.x, p.xi_sign, p.strength_order) for p in found],
            "outside_prediction": outside,
            "confirmed": confirmed,
            "not_detected": missed,
            "n_probes": int(far.sum()),
            "probe_failures": probe_fail,
            "passed": ok,
        }
        report["passed"] &= ok
    return report
