"""Truncated Fock-space linear algebra for a single harmonic oscillator.

Quadrature convention used throughout the package::

    x = (a + a^dag) / sqrt(2),   p = (a - a^dag) / (i sqrt(2)),   [x, p] = i

so the vacuum has ``var_x = var_p = 1/2`` and ``D(alpha)`` moves ``<x>`` by
``sqrt(2) Re(alpha)`` and ``<p>`` by ``sqrt(2) Im(alpha)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import ConfigError, CoverageError, DomainError, NumericError, TruncationError

DEFAULT_DIM = 256
DEFAULT_EDGE_GUARD = 1e-6

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class TruncationConfig:
    """Size of the truncated oscillator space and the guard-band tolerance.

    The top ``ceil(0.1 * dim)`` levels form the guard band. Any state whose
    population there reaches ``edge_guard`` is considered corrupted by the
    truncation.
    """

    dim: int = DEFAULT_DIM
    edge_guard: float = DEFAULT_EDGE_GUARD

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ConfigError(f"dim must be an integer >= 2, got {self.dim!r}")
        if not 0.0 < self.edge_guard < 1.0:
            raise ConfigError(f"edge_guard must lie in (0, 1), got {self.edge_guard!r}")

    @property
    def guard_levels(self) -> int:
        return max(1, math.ceil(0.1 * self.dim))


@dataclass(frozen=True)
class MomentSet:
    mean_x: float
    mean_p: float
    var_x: float
    var_p: float
    cov_xp: float
    mean_n: float

    def as_tuple(self):
        return (self.mean_x, self.mean_p, self.var_x, self.var_p, self.cov_xp, self.mean_n)

    @property
    def excess_var_x(self):
        """``var_x`` minus the vacuum value 1/2."""
        return self.var_x - 0.5

    @property
    def excess_var_p(self):
        return self.var_p - 0.5


class FockState:
    """Pure or mixed oscillator state in a truncated Fock basis.

    Build instances with :meth:`pure` or :meth:`mixed`; both validate
    normalization (and hermiticity / positivity for density matrices).
    """

    __slots__ = ("_amplitudes", "_rho")

    def __init__(self, amplitudes=None, rho=None):
        if (amplitudes is None) == (rho is None):
            raise ConfigError("exactly one of amplitudes or rho must be given")
        if amplitudes is not None:
            amps = np.array(amplitudes, dtype=complex)
            if amps.ndim != 1 or amps.size < 2:
                raise ConfigError("amplitudes must be a 1-D array of length >= 2")
            _require_finite(amps)
            norm = np.vdot(amps, amps).real
            if abs(norm - 1.0) > _NORM_TOL:
                raise DomainError(f"pure state norm^2 is {norm!r}, expected 1")
            amps.setflags(write=False)
            self._amplitudes, self._rho = amps, None
        else:
            r = np.array(rho, dtype=complex)
            if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] < 2:
                raise ConfigError("rho must be a square matrix of size >= 2")
            _require_finite(r)
            tr = np.trace(r).real
            if abs(tr - 1.0) > _NORM_TOL:
                raise DomainError(f"density matrix trace is {tr!r}, expected 1")
            if np.max(np.abs(r - r.conj().T)) > _NORM_TOL:
                raise DomainError("density matrix is not Hermitian")
            if np.linalg.eigvalsh(r)[0] < -_NORM_TOL:
                raise DomainError("density matrix is not positive semidefinite")
            r.setflags(write=False)
            self._amplitudes, self._rho = None, r

    @classmethod
    def pure(cls, amplitudes):
        return cls(amplitudes=amplitudes)

    @classmethod
    def mixed(cls, rho):
        return cls(rho=rho)

    @classmethod
    def vacuum(cls, cfg=TruncationConfig()):
        return cls.number(0, cfg)

    @classmethod
    def number(cls, n, cfg=TruncationConfig()):
        amps = np.zeros(cfg.dim, dtype=complex)
        amps[n] = 1.0
        return cls.pure(amps)

    @property
    def is_pure(self) -> bool:
        return self._amplitudes is not None

    @property
    def dim(self) -> int:
        return (self._amplitudes if self.is_pure else self._rho).shape[0]

    @property
    def amplitudes(self):
        if not self.is_pure:
            raise AttributeError("mixed state has no amplitude vector")
        return self._amplitudes

    @property
    def rho(self):
        if self._rho is not None:
            return self._rho
        return np.outer(self._amplitudes, self._amplitudes.conj())

    def purity(self) -> float:
        if self.is_pure:
            return 1.0
        return float(np.einsum("ij,ji->", self._rho, self._rho).real)

    def __repr__(self):
        kind = "pure" if self.is_pure else "mixed"
        return f"FockState({kind}, dim={self.dim})"


def _require_finite(arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite entries")


# -- operators --------------------------------------------------------------


def _check_dim(cfg):
    if not isinstance(cfg, TruncationConfig):
        raise ConfigError(f"expected TruncationConfig, got {type(cfg).__name__}")
    return cfg.dim


@lru_cache(maxsize=16)
def _ladder(dim):
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)
    a.setflags(write=False)
    ad = a.conj().T.copy()
    ad.setflags(write=False)
    return a, ad


def ladder_ops(cfg: TruncationConfig):
    """Return the annihilation and creation matrices ``(a, a^dag)``."""
    return _ladder(_check_dim(cfg))


def number_op(cfg: TruncationConfig):
    return np.diag(np.arange(_check_dim(cfg), dtype=float)).astype(complex)


def quadratures(cfg: TruncationConfig):
    """Return ``(x, p)`` as dense matrices."""
    a, ad = ladder_ops(cfg)
    x = (a + ad) / math.sqrt(2)
    p = (a - ad) / (1j * math.sqrt(2))
    return x, p


def expm(M):
    """Matrix exponential of a dense square matrix.

    Delegates to :func:`scipy.linalg.expm` (scaling and squaring with a
    degree-13 Pade approximant, Al-Mohy & Higham 2009), which is accurate to
    roughly machine precision relative to ``||M||`` for the operator norms
    used here. Non-finite input raises :class:`NumericError`.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError("expm needs a square matrix")
    _require_finite(M)
    out = scipy.linalg.expm(M)
    _require_finite(out)
    return out


def guard_population(vec_or_rho, cfg: TruncationConfig) -> float:
    """Population in the top guard band of a vector, a density matrix or a
    stack of branch vectors (shape ``(k, dim)``, populations summed)."""
    arr = np.asarray(vec_or_rho)
    g = cfg.guard_levels
    if arr.ndim == 1:
        return float(np.sum(np.abs(arr[-g:]) ** 2))
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1] == cfg.dim:
        return float(np.sum(np.diag(arr)[-g:].real))
    return float(np.sum(np.abs(arr[..., -g:]) ** 2))


def check_guard(vec_or_rho, cfg: TruncationConfig, what="state") -> float:
    pop = guard_population(vec_or_rho, cfg)
    if pop >= cfg.edge_guard:
        raise TruncationError(
            f"{what}: guard-band population {pop:.3e} >= edge_guard {cfg.edge_guard:.1e}; "
            f"increase dim (currently {cfg.dim})",
            guard_population=pop,
        )
    return pop


def _unitary_from_generator(G, cfg, what):
    U = expm(G)
    U.setflags(write=False)
    check_guard(U[:, 0], cfg, what)
    return U


@lru_cache(maxsize=64)
def _displacement_cached(alpha, cfg):
    a, ad = ladder_ops(cfg)
    return _unitary_from_generator(alpha * ad - np.conj(alpha) * a, cfg, f"D({alpha})")


def displacement(alpha: complex, cfg: TruncationConfig = TruncationConfig()):
    """``D(alpha) = exp(alpha a^dag - alpha^* a)``.

    Results are cached per ``(alpha, cfg)`` and returned read-only.
    """
    return _displacement_cached(complex(alpha), cfg)


def squeeze(z: complex, cfg: TruncationConfig = TruncationConfig()):
    """``S(z) = exp((z^* a^2 - z a^dag^2) / 2)``; real ``z > 0`` squeezes x."""
    z = complex(z)
    a, ad = ladder_ops(cfg)
    G = 0.5 * (np.conj(z) * (a @ a) - z * (ad @ ad))
    return _unitary_from_generator(G, cfg, f"S({z})")


def cubic_generator(beta: complex, cfg: TruncationConfig, form: int = 2):
    """Anti-Hermitian exponent of the cubic operator ``B(beta)``.

    ``form=1`` is the symmetrised sum
    ``beta/6 [a^dag^2 a + a^dag a a^dag + a a^dag^2] - h.c.`` and ``form=2``
    the normal-ordered ``beta/2 a^dag (n + 1) - h.c.``. They agree except in
    the top Fock levels, where truncation breaks ``a a^dag = n + 1``.
    """
    beta = complex(beta)
    a, ad = ladder_ops(cfg)
    if form == 1:
        K = (ad @ ad @ a + ad @ a @ ad + a @ ad @ ad) * (beta / 6)
    elif form == 2:
        n1 = np.arange(1, cfg.dim + 1, dtype=float)
        K = (ad * n1[None, :]) * (beta / 2)
    else:
        raise ConfigError(f"form must be 1 or 2, got {form!r}")
    return K - K.conj().T


def cubic_b(beta: complex, cfg: TruncationConfig = TruncationConfig(), form: int = 2):
    return _unitary_from_generator(cubic_generator(beta, cfg, form), cfg, f"B({beta})")


def rotation(theta: float, cfg: TruncationConfig = TruncationConfig()):
    """Diagonal phase-space rotation ``exp(i theta n)``."""
    return np.diag(np.exp(1j * theta * np.arange(_check_dim(cfg))))


# -- state functionals ------------------------------------------------------


def _branch_expectations(vectors):
    """Accumulate <a>, <a^2>, <n>, <x^2>, <p^2>, <sym(xp)> over unnormalised
    branch vectors whose squared norms sum to one."""
    mean_a = mean_a2 = 0j
    mean_n = x2 = p2 = sym = 0.0
    for v in vectors:
        dim = v.shape[0]
        sq = np.sqrt(np.arange(1, dim, dtype=float))
        av = np.zeros_like(v)
        av[:-1] = sq * v[1:]
        adv = np.zeros_like(v)
        adv[1:] = sq * v[:-1]
        xv = (av + adv) / math.sqrt(2)
        pv = (av - adv) / (1j * math.sqrt(2))
        mean_a += np.vdot(v, av)
        mean_a2 += np.vdot(adv, av)
        mean_n += np.vdot(av, av).real
        x2 += np.vdot(xv, xv).real
        p2 += np.vdot(pv, pv).real
        sym += np.vdot(xv, pv).real
    return mean_a, mean_a2, mean_n, x2, p2, sym


def moments_from_branches(vectors) -> MomentSet:
    mean_a, _, mean_n, x2, p2, sym = _branch_expectations(vectors)
    mx = math.sqrt(2) * mean_a.real
    mp = math.sqrt(2) * mean_a.imag
    return MomentSet(
        mean_x=mx,
        mean_p=mp,
        var_x=max(x2 - mx * mx, 0.0),
        var_p=max(p2 - mp * mp, 0.0),
        cov_xp=sym - mx * mp,
        mean_n=mean_n,
    )


def moments(s: FockState, cfg: TruncationConfig | None = None) -> MomentSet:
    """First and second quadrature moments plus the mean phonon number.

    If ``cfg`` is given the guard band is checked first.
    """
    if cfg is not None:
        check_guard(s.amplitudes if s.is_pure else s.rho, cfg)
    if s.is_pure:
        return moments_from_branches([s.amplitudes])
    rho = s.rho
    tc = TruncationConfig(dim=s.dim)
    a, ad = ladder_ops(tc)
    x, p = quadratures(tc)
    ev = lambda op: np.einsum("ij,ji->", rho, op)
    mean_a = ev(a)
    mx, mp = math.sqrt(2) * mean_a.real, math.sqrt(2) * mean_a.imag
    x2 = ev(x @ x).real
    p2 = ev(p @ p).real
    sym = 0.5 * ev(x @ p + p @ x).real
    return MomentSet(
        mean_x=mx,
        mean_p=mp,
        var_x=max(x2 - mx * mx, 0.0),
        var_p=max(p2 - mp * mp, 0.0),
        cov_xp=sym - mx * mp,
        mean_n=float(np.diag(rho).real @ np.arange(s.dim)),
    )


def number_distribution(s: FockState):
    if s.is_pure:
        pn = np.abs(s.amplitudes) ** 2
    else:
        pn = np.clip(np.diag(s.rho).real, 0.0, None)
    return pn


def hermite_functions(n_max: int, x):
    """Normalised oscillator eigenfunctions ``psi_0..psi_{n_max-1}`` at ``x``.

    Uses the normalised three-term recurrence, which avoids factorials and
    stays stable well beyond n = 1000. Returns shape ``(n_max, len(x))``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max,) + x.shape)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def position_distribution(s: FockState, grid, edge_tol=1e-6):
    """Position probability density on ``grid``.

    Raises :class:`CoverageError` if the density at either end of the grid
    exceeds ``edge_tol``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise CoverageError("grid must be a 1-D array with at least 3 points")
    psi = hermite_functions(s.dim, grid)
    if s.is_pure:
        dens = np.abs(s.amplitudes @ psi) ** 2
    else:
        dens = np.einsum("ni,ni->i", psi, s.rho @ psi).real
    return _check_edges(dens, edge_tol)


def branch_position_distribution(vectors, grid, edge_tol=1e-6):
    """Position density of the incoherent sum of unnormalised branch vectors."""
    grid = np.asarray(grid, dtype=float)
    psi = hermite_functions(len(vectors[0]), grid)
    dens = sum(np.abs(v @ psi) ** 2 for v in vectors)
    return _check_edges(dens, edge_tol)


def _check_edges(dens, edge_tol):
    if max(dens[0], dens[-1]) > edge_tol:
        raise CoverageError(
            f"density at grid edge is {max(dens[0], dens[-1]):.2e} > {edge_tol:.0e}; widen the grid"
        )
    return dens
