"""Discrete-lattice coined walk with orthogonal position states.

Sites are labelled by an integer ``j`` in ``[-N, N]`` at physical position
``j * alpha_step``; an ``|up>`` amplitude moves ``j -> j + 1`` and a
``|down>`` amplitude ``j -> j - 1`` after each coin toss. After ``N`` steps
only sites with ``j = N (mod 2)`` are occupied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import DomainError


@dataclass(frozen=True)
class LatticeAmplitudes:
    c: np.ndarray  # coin |down>, index j + N
    d: np.ndarray  # coin |up>
    n_steps: int
    alpha_step: float = 1.0

    @classmethod
    def initial(cls, alpha_step=1.0, coin_state=(1 / math.sqrt(2), 1 / math.sqrt(2))):
        """Walker at the origin with coin amplitudes ``(up, down)``."""
        up, down = coin_state
        return cls(c=np.array([down], complex), d=np.array([up], complex), n_steps=0,
                   alpha_step=alpha_step)

    @property
    def sites(self):
        return np.arange(-self.n_steps, self.n_steps + 1)

    @property
    def positions(self):
        return self.sites * self.alpha_step

    def probabilities(self):
        return np.abs(self.c) ** 2 + np.abs(self.d) ** 2


def lattice_step(a: LatticeAmplitudes, coin) -> LatticeAmplitudes:
    """Toss the coin at every site, then shift up-amplitudes right and down-amplitudes left."""
    up = coin[0, 0] * a.d + coin[0, 1] * a.c
    down = coin[1, 0] * a.d + coin[1, 1] * a.c
    size = a.c.size + 2
    d = np.zeros(size, complex)
    c = np.zeros(size, complex)
    d[2:] = up
    c[:-2] = down
    return LatticeAmplitudes(c=c, d=d, n_steps=a.n_steps + 1, alpha_step=a.alpha_step)


def lattice_walk(n_steps, coin, alpha_step=1.0, start=None):
    a = start if start is not None else LatticeAmplitudes.initial(alpha_step)
    for _ in range(n_steps):
        a = lattice_step(a, coin)
    return a


def lattice_moments(a: LatticeAmplitudes):
    """Mean and variance of the position distribution, in physical units."""
    prob = a.probabilities()
    x = a.positions
    mean = float(prob @ x)
    var = float(prob @ (x - mean) ** 2)
    return mean, var


def classical_rw(n_steps: int, alpha_step: float = 1.0):
    """Binomial position distribution of the unbiased random walk.

    Returns ``(positions, weights)`` over the ``n_steps + 1`` reachable sites.
    """
    if n_steps < 0 or int(n_steps) != n_steps:
        raise DomainError(f"n_steps must be a non-negative integer, got {n_steps!r}")
    k = np.arange(n_steps + 1)
    weights = binom.pmf(k, n_steps, 0.5)
    positions = (2 * k - n_steps) * alpha_step
    return positions, weights
