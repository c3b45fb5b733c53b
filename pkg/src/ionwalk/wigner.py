"""Wigner functions on a phase-space grid.

Normalization: ``W(x, p) = (1/pi) sum_n (-1)^n <n| D(a)^dag rho D(a) |n>`` with
``a = (x + i p) / sqrt(2)``, so ``iint W dx dp = 1``, the vacuum peaks at
``1/pi`` and ``W >= -1/pi``.

:func:`wigner_grid` sums the same series in closed form over matrix elements,
using the Laguerre recurrence for ``W_mn``; :func:`wigner_point` evaluates the
displaced parity directly and serves as its oracle.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigError, CoverageError, DomainError
from .fock import FockState, TruncationConfig, displacement

COVERAGE_TOL = 1e-6
SUPPORT_TOL = 1e-24
ROW_CHUNK = 16
DEFAULT_EXTENT = 14.0
DEFAULT_POINTS = 281


@dataclass(frozen=True)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # values[i, j] = W(x_i, p_j)

    @property
    def dx(self):
        return float(self.x_axis[1] - self.x_axis[0])

    @property
    def dp(self):
        return float(self.p_axis[1] - self.p_axis[0])

    @property
    def min(self):
        return float(self.values.min())

    @property
    def max(self):
        return float(self.values.max())

    def integral(self):
        return float(trapezoid(trapezoid(self.values, self.p_axis, axis=1), self.x_axis))

    def header(self):
        return {
            "x_axis": [float(self.x_axis[0]), float(self.x_axis[-1]), len(self.x_axis)],
            "p_axis": [float(self.p_axis[0]), float(self.p_axis[-1]), len(self.p_axis)],
            "min": self.min,
            "max": self.max,
            "integral": self.integral(),
            "normalization": "iint W dx dp = 1, x = (a + a^dag)/sqrt(2)",
        }

    def write(self, csv_path, json_path, extra_header=None):
        """Long-format ``x, p, W`` CSV plus a JSON header for contour plotting."""
        head = self.header()
        head.update(extra_header or {})
        with open(json_path, "w") as fh:
            json.dump(head, fh, indent=2, sort_keys=True)
            fh.write("\n")
        X, P = np.meshgrid(self.x_axis, self.p_axis, indexing="ij")
        table = np.column_stack([X.ravel(), P.ravel(), self.values.ravel()])
        with open(csv_path, "w") as fh:
            fh.write("# " + json.dumps(extra_header or {}, sort_keys=True) + "\n")
            fh.write("x,p,W\n")
            np.savetxt(fh, table, fmt="%.17g", delimiter=",")


def uniform_axis(extent=DEFAULT_EXTENT, points=DEFAULT_POINTS):
    if points < 3 or not extent > 0:
        raise ConfigError("axis needs extent > 0 and at least 3 points")
    return np.linspace(-extent, extent, points)


def _density(state) -> np.ndarray:
    if isinstance(state, FockState):
        return state.rho
    rho = np.asarray(state, dtype=complex)
    if rho.ndim == 1:
        return np.outer(rho, rho.conj())
    return rho


def effective_support(rho, tol=SUPPORT_TOL) -> int:
    """Smallest ``M`` such that the population above level ``M - 1`` is below ``tol``."""
    pops = np.abs(np.real(np.diag(rho)))
    tail = np.cumsum(pops[::-1])[::-1]
    above = np.nonzero(tail > tol)[0]
    return max(2, int(above[-1]) + 1 if above.size else 1)


def _wigner_block(rho, A):
    """Sum ``rho_mn W_mn(A)`` for complex amplitudes ``A`` (any shape).

    ``W_mn`` obeys a two-term recurrence built from the associated Laguerre
    polynomials; only the upper triangle ``n >= m`` is visited and the
    Hermitian partner is added as twice the real part.
    """
    M = rho.shape[0]
    w = [None] * M
    w[0] = np.exp(-2.0 * np.abs(A) ** 2) / math.pi
    W = rho[0, 0].real * w[0].real
    for n in range(1, M):
        w[n] = 2.0 * A * w[n - 1] / math.sqrt(n)
        W = W + 2.0 * np.real(rho[0, n] * w[n])
    for m in range(1, M):
        prev = w[m]
        w[m] = (2.0 * np.conj(A) * prev - math.sqrt(m) * w[m - 1]) / math.sqrt(m)
        W = W + np.real(rho[m, m] * w[m])
        for n in range(m + 1, M):
            nxt = (2.0 * A * w[n - 1] - math.sqrt(m) * prev) / math.sqrt(n)
            prev = w[n]
            w[n] = nxt
            W = W + 2.0 * np.real(rho[m, n] * w[n])
    return W


def wigner_grid(state, x_axis=None, p_axis=None, *, threads=1, check_coverage=True) -> WignerGrid:
    """Wigner function of ``state`` (FockState, density matrix or amplitudes).

    Raises :class:`CoverageError` if ``|W|`` on the grid boundary reaches
    ``1e-6``, i.e. the grid does not contain the state.
    """
    x_axis = uniform_axis() if x_axis is None else np.asarray(x_axis, dtype=float)
    p_axis = uniform_axis() if p_axis is None else np.asarray(p_axis, dtype=float)
    for ax in (x_axis, p_axis):
        if ax.ndim != 1 or ax.size < 3 or np.any(np.diff(ax) <= 0):
            raise ConfigError("grid axes must be increasing with at least 3 points")
    rho = _density(state)
    M = effective_support(rho)
    rho = rho[:M, :M]

    def rows(lo):
        X, P = np.meshgrid(x_axis[lo:lo + ROW_CHUNK], p_axis, indexing="ij")
        return _wigner_block(rho, (X + 1j * P) / math.sqrt(2))

    starts = range(0, x_axis.size, ROW_CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(rows, starts))
    else:
        blocks = [rows(lo) for lo in starts]
    grid = WignerGrid(x_axis, p_axis, np.vstack(blocks))
    if check_coverage:
        edge = max(np.abs(grid.values[[0, -1], :]).max(), np.abs(grid.values[:, [0, -1]]).max())
        if edge >= COVERAGE_TOL:
            raise CoverageError(f"|W| on the grid boundary is {edge:.2e} >= {COVERAGE_TOL:g}")
    return grid


def wigner_point(state, x: float, p: float, pad: int = 60) -> float:
    """Direct displaced-parity value ``(1/pi) Tr[P D(-a) rho D(a)]`` at one point.

    ``rho`` is embedded in a space ``pad`` levels larger so that the
    displacement is accurate on its support.
    """
    rho = _density(state)
    M = effective_support(rho)
    dim = M + pad + int(4 * (x * x + p * p))
    big = np.zeros((dim, dim), dtype=complex)
    big[:M, :M] = rho[:M, :M]
    D = displacement(complex(x, p) / math.sqrt(2), TruncationConfig(dim=dim))
    shifted = D.conj().T @ big @ D
    parity = (-1.0) ** np.arange(dim)
    return float(np.real(parity @ np.diag(shifted)) / math.pi)


def marginals(w: WignerGrid):
    """``(P(x), P(p))`` by trapezoid integration over the conjugate axis."""
    return trapezoid(w.values, w.p_axis, axis=1), trapezoid(w.values, w.x_axis, axis=0)


def _is_symmetric(ax):
    return np.allclose(ax, -ax[::-1], atol=1e-12 * max(1.0, np.abs(ax).max()))


def symmetry_metrics(w: WignerGrid):
    """``(asym_x, asym_p)``: relative L1 distance of ``W`` to its mirror image in x and in p."""
    if not (_is_symmetric(w.x_axis) and _is_symmetric(w.p_axis)):
        raise DomainError("symmetry metrics need axes symmetric about the origin")
    norm = np.abs(w.values).sum()
    asym_x = np.abs(w.values - w.values[::-1, :]).sum() / norm
    asym_p = np.abs(w.values - w.values[:, ::-1]).sum() / norm
    return float(asym_x), float(asym_p)


def sideband_energy(w: WignerGrid, band) -> float:
    """``iint |W| dx dp`` over ``band[0] <= |p| <= band[1]``.

    ``band[1]`` may be ``inf``. Integration is a trapezoid rule with the
    integrand zeroed outside the band.
    """
    lo, hi = band
    if lo < 0 or hi < lo:
        raise DomainError("band must satisfy 0 <= lo <= hi")
    if lo > np.abs(w.p_axis).max():
        raise DomainError("band lies outside the grid")
    mask = (np.abs(w.p_axis) >= lo) & (np.abs(w.p_axis) <= hi)
    vals = np.abs(w.values) * mask[None, :]
    return float(trapezoid(trapezoid(vals, w.p_axis, axis=1), w.x_axis))
