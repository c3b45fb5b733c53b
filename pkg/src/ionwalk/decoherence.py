"""Random coin phases, trajectory ensembles and power-law fits.

Each trajectory draws its own phase sequence from a generator seeded by
``(master_seed, trajectory_index)``, so results do not depend on how
trajectories are scheduled. Per-trajectory observables are merged into the
accumulator in ascending index order, which makes the floating-point sums
identical for any thread count.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError
from .fock import TruncationConfig, moments_from_branches
from .iontrap import IonParams, IonStepper
from .walker import IdealStepper, initial_state

log = logging.getLogger(__name__)

WALK_KINDS = ("ideal", "ion")
N_BATCHES = 20
# quadrature variance of the oscillator ground state
ZERO_POINT = 0.5


def sample_phases(q: float, n_steps: int, rng: np.random.Generator):
    """``n_steps`` coin phases drawn uniformly from ``(-pi/q, pi/q)``.

    ``q = inf`` returns zeros without consuming the generator.
    """
    if not q >= 1:
        raise DomainError(f"q must be >= 1, got {q!r}")
    if math.isinf(q):
        return np.zeros(n_steps)
    half = math.pi / q
    phases = rng.uniform(-half, half, size=n_steps)
    # uniform() samples [low, high); the window is open at both ends
    while np.any(phases == -half):
        bad = phases == -half
        phases[bad] = rng.uniform(-half, half, size=int(bad.sum()))
    return phases


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(index,)))


@dataclass(frozen=True)
class DecoherenceConfig:
    q: float
    n_traj: int = 400
    master_seed: int = 0
    n_steps: int = 17
    walk_kind: str = "ideal"
    alpha_step: float = 0.565
    ion_params: IonParams | None = None
    truncation: TruncationConfig = field(default_factory=TruncationConfig)

    def __post_init__(self):
        if not self.q >= 1:
            raise ConfigError(f"q must be >= 1, got {self.q!r}")
        if self.n_traj < 1 or self.n_steps < 1:
            raise ConfigError("n_traj and n_steps must be positive")
        if self.walk_kind not in WALK_KINDS:
            raise ConfigError(f"walk_kind must be one of {WALK_KINDS}")
        if self.walk_kind == "ion" and self.ion_params is None:
            raise ConfigError("ion walk needs ion_params")


class EnsembleAccumulator:
    """Running sums of per-step walker observables over trajectories.

    Sums are kept per batch (trajectory index modulo ``N_BATCHES``) so that
    delete-one-batch jackknife errors are available for fitted slopes.
    """

    # columns of the moment sums
    FIELDS = ("x", "x2", "p", "p2", "n")

    def __init__(self, n_steps: int, dim: int, n_batches: int = N_BATCHES):
        self.n_steps = n_steps
        self.dim = dim
        self.count = 0
        self.batch_counts = np.zeros(n_batches, dtype=int)
        self.batch_sums = np.zeros((n_batches, n_steps, len(self.FIELDS)))
        self.pn_sum = np.zeros((n_steps, dim))

    def add(self, index: int, moments_rows, pn_rows):
        b = index % len(self.batch_counts)
        self.batch_counts[b] += 1
        self.batch_sums[b] += moments_rows
        self.pn_sum += pn_rows
        self.count += 1

    @property
    def sums(self):
        return self.batch_sums.sum(axis=0)


@dataclass(frozen=True)
class MixtureObservables:
    """Observables of the trajectory-averaged density matrix, one row per step."""

    steps: np.ndarray
    mean_x: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    mean_n: np.ndarray
    pn: np.ndarray

    @property
    def sigma_x(self):
        return np.sqrt(self.var_x)

    @property
    def sigma_p(self):
        return np.sqrt(self.var_p)

    @property
    def spread_x(self):
        """Position spread above the zero point, ``sqrt(var_x - 1/2)``."""
        return np.sqrt(np.maximum(self.var_x - ZERO_POINT, 0.0))


def _mixture_from_sums(sums, count):
    m = sums / count
    var_x = np.maximum(m[:, 1] - m[:, 0] ** 2, 0.0)
    var_p = np.maximum(m[:, 3] - m[:, 2] ** 2, 0.0)
    return m[:, 0], var_x, var_p, m[:, 4]


def mixture_observables(acc: EnsembleAccumulator) -> MixtureObservables:
    """Variance of the mixture (not the mean of variances) and averaged ``P_n``."""
    if acc.count < 1:
        raise DomainError("accumulator is empty")
    mean_x, var_x, var_p, mean_n = _mixture_from_sums(acc.sums, acc.count)
    return MixtureObservables(
        steps=np.arange(1, acc.n_steps + 1),
        mean_x=mean_x,
        var_x=var_x,
        var_p=var_p,
        mean_n=mean_n,
        pn=acc.pn_sum / acc.count,
    )


def _make_stepper(cfg: DecoherenceConfig):
    if cfg.walk_kind == "ideal":
        return IdealStepper(cfg.alpha_step, cfg.truncation)
    return IonStepper.from_params(cfg.ion_params, cfg.truncation)


def _run_trajectory(stepper, cfg: DecoherenceConfig, index: int):
    phases = sample_phases(cfg.q, cfg.n_steps, trajectory_rng(cfg.master_seed, index))
    s = initial_state(cfg.truncation)
    rows = np.empty((cfg.n_steps, len(EnsembleAccumulator.FIELDS)))
    pn = np.empty((cfg.n_steps, cfg.truncation.dim))
    for k, phi in enumerate(phases):
        s = stepper(s, phi)
        b = s.branches
        m = moments_from_branches(list(b))
        rows[k] = (m.mean_x, m.var_x + m.mean_x**2, m.mean_p, m.var_p + m.mean_p**2, m.mean_n)
        pn[k] = np.sum(np.abs(b) ** 2, axis=0)
    return rows, pn


def run_ensemble(cfg: DecoherenceConfig, threads: int = 1, stepper=None) -> EnsembleAccumulator:
    """Run ``cfg.n_traj`` trajectories and accumulate their observables.

    With ``q = inf`` every trajectory is the same deterministic walk, so a
    single trajectory represents the ensemble exactly and only that one is run.
    """
    stepper = stepper or _make_stepper(cfg)
    acc = EnsembleAccumulator(cfg.n_steps, cfg.truncation.dim)
    n_run = 1 if math.isinf(cfg.q) else cfg.n_traj
    if n_run != cfg.n_traj:
        log.info("q=inf: phase window is degenerate, running 1 trajectory instead of %d", cfg.n_traj)
    work = lambda i: _run_trajectory(stepper, cfg, i)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # map preserves submission order, so merging stays index-ordered
            for i, (rows, pn) in enumerate(pool.map(work, range(n_run))):
                acc.add(i, rows, pn)
    else:
        for i in range(n_run):
            acc.add(i, *work(i))
    return acc


# -- power-law fits ---------------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float = float("nan")


def power_law_fit(n_values, y_values) -> PowerLawFit:
    """Ordinary least squares of ``ln y`` on ``ln N``.

    ``slope_stderr`` is the regression standard error of the slope.
    """
    n_values = np.asarray(n_values, dtype=float)
    y_values = np.asarray(y_values, dtype=float)
    if n_values.shape != y_values.shape or n_values.ndim != 1:
        raise DomainError("N and y must be 1-D arrays of equal length")
    if n_values.size < 3:
        raise DomainError("need at least 3 points for a power-law fit")
    if np.any(n_values <= 0) or np.any(y_values <= 0):
        raise DomainError("power-law fit needs strictly positive N and y")
    lx, ly = np.log(n_values), np.log(y_values)
    res = stats.linregress(lx, ly)
    r2 = res.rvalue**2 if np.ptp(ly) > 0 else 1.0
    return PowerLawFit(float(res.slope), float(res.intercept), float(r2), float(res.stderr))


@dataclass(frozen=True)
class SlopeEstimate:
    quantity: str
    slope: float
    stderr: float
    r_squared: float


def ensemble_slopes(acc: EnsembleAccumulator, n_min: int = 3, n_max: int | None = None,
                    subtract_zero_point: bool = True):
    """Fitted exponents of the position spread (varsigma) and ``mean_n`` (xi).

    With ``subtract_zero_point`` the spread is ``sqrt(var_x - 1/2)``, the part
    generated by the walk; otherwise it is the raw ``sigma_x``, whose constant
    vacuum floor biases the fitted exponent low at small N.

    Standard errors are delete-one-batch jackknife estimates over the
    accumulator's trajectory batches; with one populated batch they are NaN.
    """
    n_max = n_max or acc.n_steps
    sel = slice(n_min - 1, n_max)
    steps = np.arange(1, acc.n_steps + 1)[sel]

    def fits(sums, count):
        _, var_x, _, mean_n = _mixture_from_sums(sums, count)
        if subtract_zero_point:
            var_x = var_x - ZERO_POINT
        return (power_law_fit(steps, np.sqrt(var_x[sel])), power_law_fit(steps, mean_n[sel]))

    full = fits(acc.sums, acc.count)
    populated = [b for b in range(len(acc.batch_counts)) if acc.batch_counts[b] > 0]
    errs = [float("nan"), float("nan")]
    if len(populated) > 1:
        total = acc.sums
        jack = np.array([
            [f.slope for f in fits(total - acc.batch_sums[b], acc.count - acc.batch_counts[b])]
            for b in populated
        ])
        g = len(populated)
        errs = list(np.sqrt((g - 1) / g * np.sum((jack - jack.mean(axis=0)) ** 2, axis=0)))
    return (
        SlopeEstimate("spread_x" if subtract_zero_point else "sigma_x", full[0].slope, errs[0], full[0].r_squared),
        SlopeEstimate("mean_n", full[1].slope, errs[1], full[1].r_squared),
    )
