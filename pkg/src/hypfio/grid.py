"""
Periodic x-grid, its Fourier band, the time grid, and component fields.

Conventions
-----------
Fourier coefficients are taken against the physical coordinates,
``u_hat(xi_b) = sum_j u(x_j) exp(-i xi_b x_j)``, so that the direct sum
``(1/n_x) sum_b exp(i xi_b z) u_hat(xi_b)`` evaluates the band-limited
interpolant of ``u`` at arbitrary points ``z``.  This equals
``(2 pi)^-1 sum_xi e^{i z xi} u_hat(xi) dxi`` with the continuous transform.
"""
from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import AliasingWarning

FILTER_STRENGTH = 36.0
FILTER_ORDER = 16


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic x-grid, symmetric xi-band and uniform t-grid.

    ``n_t`` counts time steps, so there are ``n_t + 1`` time levels from
    ``t0`` to ``t0 + t_final``.  The xi-band holds the ``n_xi`` lowest FFT
    frequencies of the x-grid minus the Nyquist mode and the low band
    ``|xi| < xi_cut``; ``xi_max`` is therefore fixed by ``n_xi`` and the box.
    """

    n_x: int = 256
    x_min: float = -4 * np.pi
    x_max: float = 4 * np.pi
    n_xi: int | None = None
    n_t: int = 64
    t_final: float = 0.25
    xi_cut: float | None = None
    ode_steps_per_dt: int = 16
    t0: float = 0.0

    def __post_init__(self):
        if self.n_xi is None:
            object.__setattr__(self, "n_xi", self.n_x)
        if self.xi_cut is None:
            object.__setattr__(self, "xi_cut", self.dxi)
        if not _is_pow2(self.n_x) or not _is_pow2(self.n_xi):
            raise ValueError("n_x and n_xi must be powers of two")
        if self.n_xi > self.n_x:
            raise ValueError("n_xi cannot exceed n_x")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.t_final < 0:
            raise ValueError("t_final must be non-negative")
        if self.t_final > 0 and self.n_t < 1:
            raise ValueError("n_t must be >= 1 when t_final > 0")
        if self.xi_cut < self.dxi * (1 - 1e-12):
            raise ValueError("xi_cut must be at least the xi spacing")
        if self.ode_steps_per_dt < 1:
            raise ValueError("ode_steps_per_dt must be >= 1")

    # -- space --------------------------------------------------------------
    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_x

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def dxi(self) -> float:
        return 2 * np.pi / self.length

    @property
    def xi_max(self) -> float:
        return 0.5 * self.n_xi * self.dxi

    @cached_property
    def _fft_xi(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)

    @cached_property
    def band_index(self) -> np.ndarray:
        """Indices into the length-``n_x`` FFT array that form the xi-band."""
        k = np.rint(self._fft_xi / self.dxi).astype(int)
        keep = (np.abs(k) < self.n_xi // 2) & (np.abs(self._fft_xi) >= self.xi_cut * (1 - 1e-12))
        return np.nonzero(keep)[0]

    @cached_property
    def xi(self) -> np.ndarray:
        return self._fft_xi[self.band_index]

    @cached_property
    def _phase(self) -> np.ndarray:
        return np.exp(-1j * self.xi * self.x_min)

    # -- time ---------------------------------------------------------------
    @property
    def n_times(self) -> int:
        return 1 if self.t_final == 0 else self.n_t + 1

    @property
    def dt(self) -> float:
        return 0.0 if self.t_final == 0 else self.t_final / self.n_t

    @cached_property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_times)

    def time_index(self, t: float) -> int:
        """Index of grid time ``t``; raises if ``t`` is not on the grid."""
        if self.dt == 0:
            if abs(t - self.t0) > 1e-12:
                raise ValueError(f"t={t} is not on the time grid")
            return 0
        k = int(round((t - self.t0) / self.dt))
        if k < 0 or k >= self.n_times or abs(self.t0 + k * self.dt - t) > 1e-9 * (1 + abs(t)):
            raise ValueError(f"t={t} is not on the time grid")
        return k

    def sub_interval(self, start: int, stop: int) -> "GridSpec":
        """Grid restricted to time levels ``start..stop`` (inclusive)."""
        return replace(self, n_t=stop - start, t_final=(stop - start) * self.dt,
                       t0=self.t0 + start * self.dt)

    def with_final_time(self, t_final: float, n_t: int | None = None) -> "GridSpec":
        return replace(self, t_final=t_final, n_t=self.n_t if n_t is None else n_t)

    def digest(self) -> str:
        text = repr((self.n_x, self.x_min, self.x_max, self.n_xi, self.n_t, self.t_final,
                     self.xi_cut, self.ode_steps_per_dt, self.t0))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    # -- transforms ---------------------------------------------------------
    def to_band(self, u: np.ndarray) -> np.ndarray:
        """Band coefficients of ``u`` along the last axis."""
        full = np.fft.fft(np.asarray(u, dtype=complex), axis=-1)
        return full[..., self.band_index] * self._phase

    def from_band(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_band` on the grid points."""
        coeffs = np.asarray(coeffs, dtype=complex)
        full = np.zeros(coeffs.shape[:-1] + (self.n_x,), dtype=complex)
        full[..., self.band_index] = coeffs / self._phase
        return np.fft.ifft(full, axis=-1)

    def to_band_adjoint(self, coeffs: np.ndarray) -> np.ndarray:
        """Euclidean adjoint of :meth:`to_band`."""
        return self.n_x * self.from_band(coeffs)

    def synthesis_matrix(self, z: np.ndarray, symbol: np.ndarray | None = None) -> np.ndarray:
        """Matrix ``exp(i z_i xi_b) [* symbol_ib] / n_x`` for direct summation."""
        mat = np.exp(1j * np.outer(z, self.xi))
        if symbol is not None:
            mat *= symbol
        return mat / self.n_x

    def band_limit(self, u: np.ndarray, taper: bool = False) -> np.ndarray:
        """Project onto the band; ``taper`` also applies the smooth spectral filter."""
        coeffs = self.to_band(u)
        if taper:
            coeffs = coeffs * self.filter_weights
        return self.from_band(coeffs)

    @cached_property
    def filter_weights(self) -> np.ndarray:
        return np.exp(-FILTER_STRENGTH * (np.abs(self.xi) / self.xi_max) ** FILTER_ORDER)

    def check_aliasing(self, coeffs: np.ndarray, what: str = "input") -> float:
        """Warn when spectral mass above ``0.9 xi_max`` exceeds 1e-6 of the total."""
        power = np.abs(np.asarray(coeffs)) ** 2
        total = power.sum()
        if total == 0:
            return 0.0
        hi = np.abs(self.xi) > 0.9 * self.xi_max
        frac = float(power[..., hi].sum() / total)
        if frac > 1e-6:
            warnings.warn(f"{what}: {frac:.2e} of spectral mass above 0.9*xi_max",
                          AliasingWarning, stacklevel=3)
        return frac


def sobolev_norm(u: np.ndarray, s: float, grid: GridSpec) -> float:
    """Discrete ``H^s`` norm ``|| <xi>^s u_hat ||`` with Plancherel weights.

    Uses the full FFT (not only the band) so that the norm of any grid
    function is defined; for ``u = exp(i k0 x)`` and ``s = 0`` it returns
    ``sqrt(length)``.
    """
    full = np.fft.fft(np.asarray(u, dtype=complex), axis=-1)
    weight = (1.0 + grid._fft_xi**2) ** s
    return float(np.sqrt(grid.dx / grid.n_x * np.sum(weight * np.abs(full) ** 2, axis=-1)))


@dataclass
class ComponentField:
    """Values ``u(t_k, x_i)`` of one solution component.

    ``values`` has shape ``(n_times, n_x)``; ``sobolev_order`` is the order
    the component is declared to live in.
    """

    values: np.ndarray
    grid: GridSpec
    sobolev_order: float = 0.0
    name: str = "u"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.name}: non-finite values")

    def at(self, t: float) -> np.ndarray:
        return self.values[self.grid.time_index(t)]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def norm(self, s: float | None = None, k: int = -1) -> float:
        return sobolev_norm(self.values[k], self.sobolev_order if s is None else s, self.grid)

    def to_csv(self, stream=None) -> str:
        """Rows ``t, x, re, im``; formatting is fixed so output is byte-stable."""
        buf = stream if stream is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "re", "im"])
        times = self.grid.times[: self.values.shape[0]]
        for tk, row in zip(times, self.values):
            for xi_, v in zip(self.grid.x, row):
                w.writerow([f"{tk:.12g}", f"{xi_:.12g}", f"{v.real:.15e}", f"{v.imag:.15e}"])
        return buf.getvalue() if stream is None else ""


@dataclass
class SolutionBundle:
    """Components ``u_1..u_m`` over all grid times plus solver diagnostics."""

    components: list[ComponentField]
    grid: GridSpec
    diagnostics: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.components)

    def array(self) -> np.ndarray:
        """Stacked values, shape ``(m, n_times, n_x)``."""
        return np.stack([c.values for c in self.components])

    def final(self) -> np.ndarray:
        return np.stack([c.final for c in self.components])


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / ||b||`` over all entries."""
    den = np.linalg.norm(b)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / (den if den > 0 else 1.0))
