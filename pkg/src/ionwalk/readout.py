"""Phonon-number readout from electron-shelving signals.

Forward model for a drive on channel ``ch``::

    P_down(t) = 1/2 [1 + sum_n P_n cos(Omega_n^ch t)]

with carrier frequencies ``w0 exp(-eta^2/2) L_n^0(eta^2)`` and blue-sideband
frequencies ``w0 exp(-eta^2/2) eta L_n^1(eta^2) / sqrt(n + 1)``. The inverse is
a non-negative least-squares fit against the known frequency dictionary with
``sum(P_n) <= 1``.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import ConfigError, DomainError, ResolvabilityError

DEFAULT_SAMPLES = 4096
DEFAULT_DURATION_RAD = 1200 * math.pi  # in units of 1/omega0
ILL_CONDITIONED = 1e8
CARRIER_SPLIT = 25
MIN_PERIODS = 4


class Channel(str, enum.Enum):
    CARRIER = "carrier"
    BLUE_SIDEBAND = "blue_sideband"


def laguerre(n: int, m: int, x):
    """Generalised Laguerre polynomial ``L_n^m(x)`` by upward recurrence in n."""
    if n < 0 or m < 0:
        raise DomainError("laguerre needs n >= 0 and m >= 0")
    return laguerre_table(n + 1, m, x)[n]


def laguerre_table(n_count: int, m: int, x):
    """``[L_0^m(x), ..., L_{n_count-1}^m(x)]``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_count,) + x.shape)
    out[0] = 1.0
    if n_count > 1:
        out[1] = 1.0 + m - x
    for k in range(1, n_count - 1):
        out[k + 1] = ((2 * k + 1 + m - x) * out[k] - (k + m) * out[k - 1]) / (k + 1)
    return out


@dataclass(frozen=True)
class ReadoutConfig:
    """Readout parameters.

    ``sample_times`` defaults to ``DEFAULT_SAMPLES`` uniform samples over
    ``1200 pi / omega0``. At ``eta = 0.2`` that resolution (``2 pi / T``)
    separates every carrier tone below n = 25 and leaves no bin of the
    carrier plus sideband scheme up to n = 60 colliding in both channels.
    """

    eta: float = 0.2
    omega0: float = 2 * math.pi * 50e3
    sample_times: np.ndarray | None = None
    noise_sigma: float = 0.0
    n_max: int = CARRIER_SPLIT
    seed: int | None = None

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")
        if not self.omega0 > 0:
            raise ConfigError("omega0 must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        t = self.sample_times
        if t is None:
            t = np.linspace(0.0, DEFAULT_DURATION_RAD / self.omega0, DEFAULT_SAMPLES)
        t = np.array(t, dtype=float)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise ConfigError("sample_times must be a strictly increasing 1-D array")
        t.setflags(write=False)
        object.__setattr__(self, "sample_times", t)

    def with_(self, **changes):
        fields = dict(eta=self.eta, omega0=self.omega0, sample_times=self.sample_times,
                      noise_sigma=self.noise_sigma, n_max=self.n_max, seed=self.seed)
        fields.update(changes)
        return ReadoutConfig(**fields)


@dataclass(frozen=True)
class SignalTrace:
    times: np.ndarray
    p_down: np.ndarray
    channel: Channel = Channel.CARRIER

    def __post_init__(self):
        if np.shape(self.times) != np.shape(self.p_down):
            raise ConfigError("times and p_down must have equal length")
        object.__setattr__(self, "channel", Channel(self.channel))

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0

    def to_csv(self, path_or_buf, header: dict | None = None):
        """Write columns ``t_seconds, p_down`` with an optional ``#`` JSON header line."""
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            meta = {"channel": self.channel.value}
            meta.update(header or {})
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_seconds", "p_down"])
            for t, p in zip(self.times, self.p_down):
                w.writerow([f"{t:.17g}", f"{p:.17g}"])
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, path_or_buf, channel=None):
        """Read a trace written by :meth:`to_csv` (or any ``t_seconds, p_down`` CSV).

        Malformed content raises :class:`ValueError`.
        """
        if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
            with open(path_or_buf, newline="") as fh:
                text = fh.read()
        else:
            text = path_or_buf.read()
        meta = {}
        lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                try:
                    meta.update(json.loads(line[1:]))
                except json.JSONDecodeError:
                    pass
            elif line.strip():
                lines.append(line)
        reader = csv.DictReader(io.StringIO("\n".join(lines)))
        if reader.fieldnames is None or not {"t_seconds", "p_down"} <= set(reader.fieldnames):
            raise ValueError("signal CSV needs columns t_seconds and p_down")
        t, p = [], []
        for row in reader:
            t.append(float(row["t_seconds"]))
            p.append(float(row["p_down"]))
        ch = channel or meta.get("channel", Channel.CARRIER)
        return cls(np.array(t), np.array(p), Channel(ch))


@dataclass(frozen=True)
class ReconstructionResult:
    p_n_hat: np.ndarray
    residual_norm: float
    ambiguity_flags: np.ndarray
    condition_number: float = float("nan")
    deficit: float = 0.0

    @property
    def ill_conditioned(self) -> bool:
        return not self.condition_number < ILL_CONDITIONED

    @property
    def flagged(self) -> bool:
        return self.ill_conditioned or bool(np.any(self.ambiguity_flags))


def rabi_freqs(channel, n_count: int, cfg: ReadoutConfig):
    """Angular Rabi frequencies for ``n = 0..n_count-1``."""
    channel = Channel(channel)
    x = cfg.eta**2
    dw = cfg.omega0 * math.exp(-x / 2)
    if channel is Channel.CARRIER:
        return dw * laguerre_table(n_count, 0, x)
    n = np.arange(n_count)
    return dw * cfg.eta * laguerre_table(n_count, 1, x) / np.sqrt(n + 1)


def rabi_freq(channel, n: int, cfg: ReadoutConfig) -> float:
    if n < 0:
        raise DomainError("n must be >= 0")
    return float(rabi_freqs(channel, n + 1, cfg)[n])


def monotonic_range(eta: float, scan_limit: int = 2000) -> int:
    """Largest ``n*`` such that the carrier frequency decreases strictly through ``n*``.

    Returns ``scan_limit`` if no turning point is found in the scan (the
    small-eta limit, where ``L_n^0(eta^2)`` changes too slowly to resolve).
    """
    if not eta > 0:
        raise DomainError("eta must be positive")
    L = laguerre_table(scan_limit + 2, 0, eta**2)
    rising = np.nonzero(np.diff(L) >= 0)[0]
    return int(rising[0]) if rising.size else scan_limit


def synthesize_signal(p_n, channel, cfg: ReadoutConfig, rng=None) -> SignalTrace:
    """Electron-shelving probability ``P_down(t)`` at ``cfg.sample_times``.

    Gaussian noise of width ``cfg.noise_sigma`` is added and the result
    clamped to [0, 1]. ``rng`` may be a Generator or seed; it defaults to
    ``cfg.seed``.
    """
    p_n = np.asarray(p_n, dtype=float)
    if np.any(p_n < 0) or abs(p_n.sum() - 1.0) > 1e-6:
        raise DomainError("p_n must be a normalised probability vector")
    t = cfg.sample_times
    freqs = rabi_freqs(channel, p_n.size, cfg)
    sig = 0.5 * (1.0 + np.cos(np.outer(t, freqs)) @ p_n)
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(cfg.seed if rng is None else rng)
        sig = np.clip(sig + rng.normal(0.0, cfg.noise_sigma, size=sig.shape), 0.0, 1.0)
    return SignalTrace(np.array(t), sig, Channel(channel))


def _ambiguity(freqs, resolution):
    """Bins whose tone lies within ``resolution`` of another tone.

    The signal only sees ``cos(Omega t)``, so tones are compared by magnitude;
    a carrier frequency that has passed through zero aliases onto low ``n``.
    """
    mag = np.abs(freqs)
    gaps = np.abs(mag[:, None] - mag[None, :])
    np.fill_diagonal(gaps, np.inf)
    return np.min(gaps, axis=1) < resolution


def _check_resolvable(sig: SignalTrace, freqs, n_columns=None):
    """Spectral resolution ``2 pi / T`` of ``sig``, after the precondition checks.

    The record must span at least ``MIN_PERIODS`` periods of the slowest tone
    among ``freqs`` (the bins being reported) and hold at least as many samples
    as dictionary columns.
    """
    T = sig.duration
    n_columns = len(freqs) if n_columns is None else n_columns
    if not T > 0 or len(sig.times) < max(2, n_columns):
        raise ResolvabilityError("signal has zero duration or fewer samples than unknowns")
    slowest = float(np.min(np.abs(freqs)))
    if T * slowest < MIN_PERIODS * 2 * math.pi:
        raise ResolvabilityError(
            f"duration {T:.3e}s covers fewer than {MIN_PERIODS} periods of the slowest "
            f"tone ({slowest:.3e} rad/s)"
        )
    return 2 * math.pi / T


def _bounded_nnls(A, b, budget):
    """min ||A p - b|| subject to p >= 0 and sum(p) <= budget."""
    p, _ = nnls(A, b, maxiter=50 * A.shape[1])
    if p.sum() <= budget * (1 + 1e-9):
        return p
    # the sum constraint is active: enforce it as a heavily weighted equality row
    w = 1e4 * max(1.0, np.linalg.norm(A, 2))
    Aw = np.vstack([A, w * np.ones(A.shape[1])])
    bw = np.append(b, w * budget)
    p, _ = nnls(Aw, bw, maxiter=50 * A.shape[1])
    return p * min(1.0, budget / p.sum()) if p.sum() > 0 else p


def _solve(sig, freqs, budget=1.0, offset=None):
    A = np.cos(np.outer(sig.times, freqs))
    b = 2.0 * np.asarray(sig.p_down) - 1.0
    if offset is not None:
        b = b - offset
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    p = _bounded_nnls(A, b, budget)
    resid = float(np.linalg.norm(A @ p - b))
    return p, resid, cond


def reconstruct(sig: SignalTrace, cfg: ReadoutConfig) -> ReconstructionResult:
    """Fit ``P_n`` for ``n < cfg.n_max`` from one signal trace.

    ``ambiguity_flags[n]`` is set when another tone lies closer than the
    spectral resolution ``2 pi / duration``.
    """
    freqs = rabi_freqs(sig.channel, cfg.n_max, cfg)
    resolution = _check_resolvable(sig, freqs)
    p, resid, cond = _solve(sig, freqs)
    return ReconstructionResult(
        p_n_hat=p,
        residual_norm=resid,
        ambiguity_flags=_ambiguity(freqs, resolution),
        condition_number=cond,
        deficit=max(0.0, 1.0 - float(p.sum())),
    )


def hybrid_reconstruct(carrier: SignalTrace, bsb: SignalTrace, cfg: ReadoutConfig,
                       split: int = CARRIER_SPLIT) -> ReconstructionResult:
    """Carrier for ``n < split``, then blue sideband for ``split <= n < cfg.n_max``.

    Stage 1 fits the carrier trace against the full dictionary (so tones above
    ``split`` cannot leak into low bins) and keeps ``n < split``. Stage 2
    subtracts those known contributions from the sideband trace and fits the
    remaining bins under the leftover probability budget. A bin is flagged
    only if its tone collides within resolution in both channels.
    """
    if Channel(carrier.channel) is not Channel.CARRIER or Channel(bsb.channel) is not Channel.BLUE_SIDEBAND:
        raise ConfigError("hybrid_reconstruct needs a carrier trace and a blue-sideband trace")
    if cfg.n_max <= split:
        return reconstruct(carrier, cfg)
    f_c = rabi_freqs(Channel.CARRIER, cfg.n_max, cfg)
    f_b = rabi_freqs(Channel.BLUE_SIDEBAND, cfg.n_max, cfg)
    res_c = _check_resolvable(carrier, f_c[:split], cfg.n_max)
    res_b = _check_resolvable(bsb, f_b[split:])

    p_c, resid_c, cond_c = _solve(carrier, f_c)
    low = p_c[:split]
    known = np.cos(np.outer(bsb.times, f_b[:split])) @ low
    budget = max(0.0, 1.0 - float(low.sum()))
    high, resid_b, cond_b = _solve(bsb, f_b[split:], budget=budget, offset=known)

    p = np.concatenate([low, high])
    # stage-2 bins only compete with each other on the sideband: stage-1 tones are known
    side = np.concatenate([_ambiguity(f_b, res_b)[:split], _ambiguity(f_b[split:], res_b)])
    flags = _ambiguity(f_c, res_c) & side
    return ReconstructionResult(
        p_n_hat=p,
        residual_norm=float(math.hypot(resid_c, resid_b)),
        ambiguity_flags=flags,
        condition_number=max(cond_c, cond_b),
        deficit=max(0.0, 1.0 - float(p.sum())),
    )
