"""Coin (x) oscillator composite space and the ideal walk step.

Composite vectors are stored coin-major: indices ``[0, dim)`` hold the
``|up>`` branch and ``[dim, 2 dim)`` the ``|down>`` branch. 2x2 coin matrices
use the same basis order ``(|up>, |down>)``, so ``sigma_z |up> = +|up>``.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, DomainError
from .fock import (
    FockState,
    TruncationConfig,
    check_guard,
    displacement,
    moments_from_branches,
)

UP, DOWN = 0, 1

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# pi pulse |down><up| + |up><down|
X_GATE = SIGMA_X

DEFAULT_PHI = math.pi / 2


def coin_matrix(phi: float):
    """Coin toss ``C(phi) = (1 - i sigma_x cos(phi) + i sigma_y sin(phi)) / sqrt(2)``."""
    return (IDENTITY2 - 1j * math.cos(phi) * SIGMA_X + 1j * math.sin(phi) * SIGMA_Y) / math.sqrt(2)


class CoinWalkerState:
    """Pure state of coin and walker, held as a flat ``2 * dim`` vector."""

    __slots__ = ("_vec",)

    def __init__(self, vector, *, check=True):
        vec = np.array(vector, dtype=complex).reshape(-1)
        if vec.size % 2 or vec.size < 4:
            raise ConfigError("composite vector length must be 2 * dim with dim >= 2")
        if check:
            norm = np.vdot(vec, vec).real
            if abs(norm - 1.0) > 1e-9:
                raise DomainError(f"composite norm^2 is {norm!r}, expected 1")
        vec.setflags(write=False)
        self._vec = vec

    @classmethod
    def from_branches(cls, up, down, *, check=True):
        return cls(np.concatenate([np.asarray(up, complex), np.asarray(down, complex)]), check=check)

    @property
    def vector(self):
        return self._vec

    @property
    def dim(self) -> int:
        return self._vec.size // 2

    @property
    def up(self):
        return self._vec[: self.dim]

    @property
    def down(self):
        return self._vec[self.dim :]

    @property
    def branches(self):
        return self._vec.reshape(2, self.dim)

    def norm(self) -> float:
        return float(np.vdot(self._vec, self._vec).real)

    def coin_populations(self):
        b = self.branches
        return np.sum(np.abs(b) ** 2, axis=1)

    def __repr__(self):
        return f"CoinWalkerState(dim={self.dim})"


def initial_state(cfg: TruncationConfig = TruncationConfig()) -> CoinWalkerState:
    """Oscillator ground state with the coin in ``(|down> + |up>) / sqrt(2)``."""
    vec = np.zeros(2 * cfg.dim, dtype=complex)
    vec[0] = vec[cfg.dim] = 1 / math.sqrt(2)
    return CoinWalkerState(vec)


def apply_coin(s: CoinWalkerState, coin) -> CoinWalkerState:
    return CoinWalkerState(coin @ s.branches, check=False)


def coin_diagonal(up_op, down_op):
    """Block-diagonal composite matrix ``up_op (x) |up><up| + down_op (x) |down><down|``."""
    dim = up_op.shape[0]
    out = np.zeros((2 * dim, 2 * dim), dtype=complex)
    out[:dim, :dim] = up_op
    out[dim:, dim:] = down_op
    return out


def coin_operator(coin, dim: int):
    """``1 (x) coin`` as a composite matrix in coin-major order."""
    return np.kron(coin, np.eye(dim))


def conditional_translation(alpha_step: float, cfg: TruncationConfig = TruncationConfig()):
    """Coin-conditioned walker translation as a composite matrix.

    The ``|up>`` branch is displaced by ``D(+alpha_step)`` and ``|down>`` by
    ``D(-alpha_step)``, so one step moves ``<x>`` by ``+-sqrt(2) alpha_step``.
    ``alpha_step`` is therefore the coherent-state amplitude of one lattice
    step, which is what makes the ion-trap step ``D(+-3 Omega eta t)`` the
    same walk.
    """
    return coin_diagonal(displacement(alpha_step, cfg), displacement(-alpha_step, cfg))


class IdealStepper:
    """Applies ``Q(phi) = T [1 (x) C(phi)]`` with precomputed displacements."""

    def __init__(self, alpha_step: float, cfg: TruncationConfig = TruncationConfig()):
        self.alpha_step = float(alpha_step)
        self.cfg = cfg
        self._plus = displacement(self.alpha_step, cfg)
        self._minus = displacement(-self.alpha_step, cfg)

    def __call__(self, s: CoinWalkerState, phi: float) -> CoinWalkerState:
        b = coin_matrix(phi) @ s.branches
        out = np.stack([self._plus @ b[UP], self._minus @ b[DOWN]])
        check_guard(out, self.cfg, "ideal step")
        return CoinWalkerState(out.reshape(-1), check=False)


def ideal_step(s: CoinWalkerState, phi: float = DEFAULT_PHI, alpha_step: float = 0.565,
               cfg: TruncationConfig | None = None) -> CoinWalkerState:
    """One ideal walk step: coin toss ``C(phi)`` then conditional translation."""
    cfg = cfg or TruncationConfig(dim=s.dim)
    if cfg.dim != s.dim:
        raise ConfigError(f"state dim {s.dim} != cfg.dim {cfg.dim}")
    return IdealStepper(alpha_step, cfg)(s, phi)


def run_walk(stepper, phis, s0: CoinWalkerState):
    """Yield the state after each step for the given coin phases."""
    s = s0
    for phi in phis:
        s = stepper(s, phi)
        yield s


def reduce_walker(s: CoinWalkerState) -> FockState:
    """Trace out the coin: ``rho = |up><up| + |down><down|``."""
    up, down = s.up, s.down
    rho = np.outer(up, up.conj()) + np.outer(down, down.conj())
    # restore exact trace after accumulated roundoff
    rho = 0.5 * (rho + rho.conj().T)
    return FockState.mixed(rho / np.trace(rho).real)


def walker_moments(s: CoinWalkerState):
    """Walker quadrature moments computed on the branches without forming rho."""
    return moments_from_branches(list(s.branches))


def position_asymmetry(s: CoinWalkerState, grid=None) -> float:
    """``||P(x) - P(-x)||_1`` of the walker position density.

    ``grid`` must be symmetric about zero; the default spans ``[-20, 20]``.
    """
    from scipy.integrate import trapezoid

    from .fock import branch_position_distribution

    grid = np.linspace(-20.0, 20.0, 801) if grid is None else np.asarray(grid, dtype=float)
    if not np.allclose(grid, -grid[::-1]):
        raise DomainError("asymmetry needs a grid symmetric about zero")
    dens = branch_position_distribution(list(s.branches), grid)
    return float(trapezoid(np.abs(dens - dens[::-1]), grid))
