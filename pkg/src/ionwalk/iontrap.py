"""Trapped-ion implementation of the walk step.

Two routes to the same pulse propagator are provided:

* :func:`branch_operators` builds the Lamb-Dicke operator product
  ``D(c eta t) B(-c eta^3 t) U_off(c)`` per coin branch, with
  ``c = 2 Omega'`` on ``|down>`` and ``c = -Omega'`` on ``|up>``.
* :func:`integrate_propagators` integrates the full interaction Hamiltonian
  ``Omega_s [exp(-i(delta t - phi)) D(i eta exp(i omega_z t)) + h.c.]`` with a
  midpoint exponential rule. It is the oracle for the product.

The walk step is ``U_tot = (1 (x) X) U^dag (1 (x) X) U (1 (x) C(phi))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ConvergenceError
from .fock import (
    TruncationConfig,
    check_guard,
    cubic_b,
    displacement,
    expm,
    ladder_ops,
    quadratures,
    squeeze,
)
from .walker import (
    DEFAULT_PHI,
    DOWN,
    UP,
    X_GATE,
    CoinWalkerState,
    coin_diagonal,
    coin_matrix,
    coin_operator,
)

UOFF_FACTORS = ("displacement", "squeeze", "cubic", "phase")
UOFF_EVALUATIONS = ("interval", "endpoint")
SUBSTEPS_PER_PERIOD = 800


@dataclass(frozen=True)
class IonParams:
    """Physical parameters of one displacement pulse.

    Frequencies are angular (rad/s) and ``pulse_t`` is in seconds. The
    ``|down>`` carrier Rabi frequency is always ``-2 * omega_up``.

    ``uoff_evaluation`` selects how the oscillating factors ``exp(i k w t)``
    inside ``U_off`` are evaluated: ``"interval"`` accumulates them over the
    pulse (``exp(i k w t) - 1``, the propagator from 0 to t) and
    ``"endpoint"`` uses the bare antiderivative value at ``t``.
    ``uoff_factors`` lists the ``U_off`` factors that are kept; the others are
    replaced by the identity.
    """

    delta: float
    omega_z: float
    omega_up: float
    eta: float
    pulse_t: float
    laser_phase: float = 0.0
    include_B: bool = True
    include_Uoff: bool = True
    uoff_evaluation: str = "interval"
    uoff_factors: frozenset = field(default_factory=lambda: frozenset(UOFF_FACTORS))

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta!r}")
        if not self.pulse_t > 0:
            raise ConfigError(f"pulse_t must be positive, got {self.pulse_t!r}")
        if not self.omega_z > 0:
            raise ConfigError(f"omega_z must be positive, got {self.omega_z!r}")
        if self.uoff_evaluation not in UOFF_EVALUATIONS:
            raise ConfigError(f"uoff_evaluation must be one of {UOFF_EVALUATIONS}")
        object.__setattr__(self, "uoff_factors", frozenset(self.uoff_factors))
        unknown = self.uoff_factors - set(UOFF_FACTORS)
        if unknown:
            raise ConfigError(f"unknown U_off factors {sorted(unknown)}")

    @classmethod
    def from_cyclic_mhz(cls, delta_mhz, omega_z_mhz, omega_up_mhz, eta, pulse_t, **kw):
        """Build from ``(delta, omega_z, Omega_up) / 2 pi`` given in MHz."""
        to_rad = 2e6 * math.pi
        return cls(delta=delta_mhz * to_rad, omega_z=omega_z_mhz * to_rad,
                   omega_up=omega_up_mhz * to_rad, eta=eta, pulse_t=pulse_t, **kw)

    @property
    def omega_down(self) -> float:
        return -2.0 * self.omega_up

    @property
    def step_amplitude(self) -> float:
        """Symmetric step ``3 Omega_up eta t`` of the combined walk step."""
        return 3.0 * self.omega_up * self.eta * self.pulse_t

    def with_(self, **changes) -> "IonParams":
        return replace(self, **changes)


# (delta, omega_z, Omega_up)/2pi = (4, 4, 0.3) MHz, eta = 0.1, t = 1 us
REFERENCE_PARAMS = IonParams.from_cyclic_mhz(4.0, 4.0, 0.3, eta=0.1, pulse_t=1e-6)


@dataclass(frozen=True)
class StepDiagnostics:
    displacement_magnitude: float
    ld_margin: float
    guard_population: float | None = None

    @property
    def valid(self) -> bool:
        return self.ld_margin > 1.0


def ld_validity(p: IonParams, n_max_steps: int, guard_population=None) -> StepDiagnostics:
    """Margin of the Lamb-Dicke bound ``eta << (2/3)^(1/4) / sqrt(N_max Omega_up t)``.

    The margin is the bound divided by ``eta``; the verdict is valid when it
    exceeds one. How much larger than one is "much less" is left to the caller.
    """
    bound = (2.0 / 3.0) ** 0.25 / math.sqrt(n_max_steps * abs(p.omega_up) * p.pulse_t)
    return StepDiagnostics(
        displacement_magnitude=abs(p.step_amplitude),
        ld_margin=bound / p.eta,
        guard_population=guard_population,
    )


# -- operator product -------------------------------------------------------


def _signed_rabi(p: IonParams) -> float:
    # The product form is written for a real laser phase factor; phi = 0 makes
    # the |up> branch step toward +x.
    if abs(math.sin(p.laser_phase)) > 1e-12:
        raise ConfigError("operator product needs laser_phase equal to 0 or pi (mod 2 pi)")
    if abs(p.delta - p.omega_z) > 1e-9 * p.omega_z:
        raise ConfigError("operator product assumes delta == omega_z; use the integrator for detuned pulses")
    return -math.cos(p.laser_phase) * p.omega_up


def _oscillation(k, p: IonParams):
    val = np.exp(1j * k * p.omega_z * p.pulse_t)
    return val - 1.0 if p.uoff_evaluation == "interval" else val


def squeeze_parameter(coefficient: float, p: IonParams) -> complex:
    """``z`` of the off-resonant squeeze ``S(2z)`` for a branch coefficient."""
    w = coefficient / 2.0
    return w * p.eta**2 * (_oscillation(1, p) / p.omega_z + _oscillation(3, p) / (3 * p.omega_z))


def u_off(coefficient: float, p: IonParams, cfg: TruncationConfig = TruncationConfig()):
    """Off-resonant part of the pulse for branch coefficient ``c``.

    Composes, in written order,
    ``D(-i w eta e2/wz) S(2z) B(i w eta^3 e2/wz) exp(2 i w [-eta^2 sin(wz t)/wz n + (eta^3 (e4 - 2 e2)/(24 wz) a^dag^3 + h.c.)])``
    with ``w = c / 2`` and ``ek`` the oscillating factor of frequency
    ``k * omega_z``. The last two terms share one exponential.
    """
    w = coefficient / 2.0
    eta, wz, t = p.eta, p.omega_z, p.pulse_t
    e2, e4 = _oscillation(2, p), _oscillation(4, p)
    U = np.eye(cfg.dim, dtype=complex)
    if "displacement" in p.uoff_factors:
        U = U @ displacement(-1j * w * eta * e2 / wz, cfg)
    if "squeeze" in p.uoff_factors:
        U = U @ squeeze(2 * squeeze_parameter(coefficient, p), cfg)
    if "cubic" in p.uoff_factors:
        U = U @ cubic_b(1j * w * eta**3 * e2 / wz, cfg)
    if "phase" in p.uoff_factors:
        a, ad = ladder_ops(cfg)
        cube = eta**3 * (e4 - 2 * e2) / (24 * wz) * (ad @ ad @ ad)
        kerr = -(eta**2) * math.sin(wz * t) / wz * np.arange(cfg.dim)
        herm = np.diag(kerr).astype(complex) + cube + cube.conj().T
        U = U @ expm(2j * w * herm)
    return U


def branch_operator(coefficient: float, p: IonParams, cfg: TruncationConfig = TruncationConfig()):
    """``D(c eta t) B(-c eta^3 t) U_off(c)`` on one coin branch.

    The cubic correction carries the opposite sign to the displacement: that
    is the sign produced by the third-order term of the interaction
    Hamiltonian, and it is the one the direct integrator agrees with.
    """
    eta, t = p.eta, p.pulse_t
    U = displacement(coefficient * eta * t, cfg)
    if p.include_B:
        U = U @ cubic_b(-coefficient * eta**3 * t, cfg)
    if p.include_Uoff:
        U = U @ u_off(coefficient, p, cfg)
    check_guard(U[:, 0], cfg, "pulse operator")
    return U


def branch_operators(p: IonParams, cfg: TruncationConfig = TruncationConfig()):
    """Pulse propagators ``(U_up, U_down)`` from the operator product."""
    om = _signed_rabi(p)
    return branch_operator(-om, p, cfg), branch_operator(2 * om, p, cfg)


def step_operator_product(p: IonParams, cfg: TruncationConfig = TruncationConfig()):
    """Coin-diagonal composite pulse operator ``U``."""
    return coin_diagonal(*branch_operators(p, cfg))


def full_step(p: IonParams, phi_coin: float = DEFAULT_PHI, cfg: TruncationConfig = TruncationConfig()):
    """Composite ``U_tot = (1 (x) X) U^dag (1 (x) X) U (1 (x) C(phi))``."""
    U = step_operator_product(p, cfg)
    X = coin_operator(X_GATE, cfg.dim)
    C = coin_operator(coin_matrix(phi_coin), cfg.dim)
    return X @ U.conj().T @ X @ U @ C


class IonStepper:
    """Applies ``U_tot`` branchwise.

    ``X U^dag X`` hands the ``|up>`` branch ``U_down^dag`` and vice versa,
    so each branch sees ``U_other^dag U_own`` after the coin toss.
    """

    def __init__(self, U_up, U_down, cfg: TruncationConfig):
        self.cfg = cfg
        self._up = U_down.conj().T @ U_up
        self._down = U_up.conj().T @ U_down

    @classmethod
    def from_params(cls, p: IonParams, cfg: TruncationConfig = TruncationConfig(), oracle=False, dt=None):
        ops = integrate_propagators(p, cfg, dt) if oracle else branch_operators(p, cfg)
        return cls(*ops, cfg)

    def __call__(self, s: CoinWalkerState, phi: float) -> CoinWalkerState:
        b = coin_matrix(phi) @ s.branches
        out = np.stack([self._up @ b[UP], self._down @ b[DOWN]])
        check_guard(out, self.cfg, "ion step")
        return CoinWalkerState(out.reshape(-1), check=False)


# -- direct integration -----------------------------------------------------


def default_dt(p: IonParams) -> float:
    return (2 * math.pi / p.omega_z) / SUBSTEPS_PER_PERIOD


def _substep_unitaries(rabi, p: IonParams, cfg: TruncationConfig, dt):
    """Yield ``exp(-i H(t_mid) h)`` for each substep of the pulse."""
    max_dt = 2 * math.pi / (50 * p.omega_z)
    if dt > max_dt * (1 + 1e-12):
        raise ConfigError(f"dt={dt:.3e}s is coarser than 2pi/(50 omega_z)={max_dt:.3e}s")
    steps = max(1, math.ceil(p.pulse_t / dt - 1e-9))
    h = p.pulse_t / steps
    x, _ = quadratures(cfg)
    lam, V = np.linalg.eigh(x)
    # D(i eta) = exp(i sqrt(2) eta x); rotating by exp(i w t n) gives D(i eta e^{i w t})
    kick = (V * np.exp(1j * math.sqrt(2) * p.eta * lam)) @ V.conj().T
    levels = np.arange(cfg.dim)
    for k in range(steps):
        tm = (k + 0.5) * h
        ph = np.exp(1j * p.omega_z * tm * levels)
        M = kick * np.outer(ph, ph.conj())
        H = rabi * np.exp(-1j * (p.delta * tm - p.laser_phase)) * M
        H = H + H.conj().T
        w, Q = np.linalg.eigh(H)
        yield (Q * np.exp(-1j * w * h)) @ Q.conj().T


def integrate_propagators(p: IonParams, cfg: TruncationConfig = TruncationConfig(), dt=None):
    """Time-ordered pulse propagators ``(U_up, U_down)`` from the full Hamiltonian."""
    dt = dt or default_dt(p)
    out = []
    for rabi in (p.omega_up, p.omega_down):
        U = np.eye(cfg.dim, dtype=complex)
        for step in _substep_unitaries(rabi, p, cfg, dt):
            U = step @ U
        out.append(U)
    return tuple(out)


def _integrate_state(p, s, cfg, dt):
    branches = []
    for rabi, vec in ((p.omega_up, s.up), (p.omega_down, s.down)):
        v = np.array(vec)
        for step in _substep_unitaries(rabi, p, cfg, dt):
            v = step @ v
        branches.append(v)
    return CoinWalkerState.from_branches(*branches, check=False)


def direct_integrate(p: IonParams, s: CoinWalkerState, dt=None, cfg: TruncationConfig | None = None,
                     check_convergence=False) -> CoinWalkerState:
    """Apply one pulse to ``s`` by integrating the interaction Hamiltonian.

    With ``check_convergence`` the pulse is repeated at ``dt / 2`` and a
    :class:`ConvergenceError` is raised if the fidelity between the two
    results differs from one by ``1e-8`` or more.
    """
    cfg = cfg or TruncationConfig(dim=s.dim)
    dt = dt or default_dt(p)
    out = _integrate_state(p, s, cfg, dt)
    if check_convergence:
        fine = _integrate_state(p, s, cfg, dt / 2)
        change = 1.0 - abs(np.vdot(out.vector, fine.vector)) ** 2
        if abs(change) >= 1e-8:
            raise ConvergenceError(f"halving dt changed the fidelity by {change:.2e}")
    check_guard(out.branches, cfg, "integrated pulse")
    return out


def fidelity(s1: CoinWalkerState, s2: CoinWalkerState) -> float:
    return float(abs(np.vdot(s1.vector, s2.vector)) ** 2)


def ion_walk(p: IonParams, n_steps: int, phi: float = DEFAULT_PHI,
             cfg: TruncationConfig = TruncationConfig(), oracle=False, s0=None):
    """States after steps ``1..n_steps`` of the ion-trap walk with fixed coin phase."""
    from .walker import initial_state, run_walk

    stepper = IonStepper.from_params(p, cfg, oracle=oracle)
    s0 = s0 if s0 is not None else initial_state(cfg)
    return list(run_walk(stepper, [phi] * n_steps, s0))


# -- U_off attribution ------------------------------------------------------


def uoff_attribution(p: IonParams, n_steps: int = 10, phi: float = DEFAULT_PHI,
                     cfg: TruncationConfig = TruncationConfig(), band=(2.0, math.inf),
                     x_axis=None, p_axis=None):
    """Momentum-sideband energy of the N-step walker with ``U_off`` factors toggled.

    Returns a dict keyed ``"all"``, ``"none"`` and ``"without_<factor>"`` for
    each factor in :data:`UOFF_FACTORS`. A factor whose removal lowers the
    energy relative to ``"all"`` contributes to the sidebands.
    """
    from .walker import reduce_walker
    from .wigner import sideband_energy, wigner_grid

    variants = {"all": p, "none": p.with_(include_Uoff=False)}
    for name in UOFF_FACTORS:
        variants[f"without_{name}"] = p.with_(include_Uoff=True,
                                              uoff_factors=frozenset(UOFF_FACTORS) - {name})
    out = {}
    for label, q in variants.items():
        s = ion_walk(q, n_steps, phi, cfg)[-1]
        out[label] = sideband_energy(wigner_grid(reduce_walker(s), x_axis, p_axis), band)
    return out
