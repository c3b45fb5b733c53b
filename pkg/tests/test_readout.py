import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb, eval_genlaguerre, factorial

from ionwalk.errors import ConfigError, DomainError, ResolvabilityError
from ionwalk.readout import (
    Channel,
    ReadoutConfig,
    SignalTrace,
    hybrid_reconstruct,
    laguerre,
    laguerre_table,
    monotonic_range,
    rabi_freq,
    rabi_freqs,
    reconstruct,
    synthesize_signal,
)

CFG = ReadoutConfig()


def laguerre_series(n, m, x):
    k = np.arange(n + 1)
    return float(np.sum((-1.0) ** k * comb(n + m, n - k) * x**k / factorial(k)))


def test_laguerre_reference_value():
    assert laguerre(2, 1, 0.04) == pytest.approx(2.8808, abs=1e-12)


@pytest.mark.parametrize("m", [0, 1])
@pytest.mark.parametrize("x", [0.0025, 0.04, 0.5])
def test_laguerre_against_series_and_scipy(m, x):
    table = laguerre_table(40, m, x)
    for n in range(40):
        assert table[n] == pytest.approx(laguerre_series(n, m, x), rel=1e-10, abs=1e-12)
        assert table[n] == pytest.approx(eval_genlaguerre(n, m, x), rel=1e-10, abs=1e-12)


def test_rabi_frequencies():
    x = CFG.eta**2
    assert rabi_freq("carrier", 0, CFG) == pytest.approx(CFG.omega0 * math.exp(-x / 2))
    assert rabi_freq("blue_sideband", 0, CFG) == pytest.approx(CFG.omega0 * CFG.eta * math.exp(-x / 2))
    assert np.all(rabi_freqs("blue_sideband", 30, CFG.with_(eta=0.0)) == 0)
    with pytest.raises(DomainError):
        rabi_freq("carrier", -1, CFG)
    with pytest.raises(ValueError):
        rabi_freqs("red_sideband", 3, CFG)


def test_monotonic_range():
    L = eval_genlaguerre(np.arange(200), 0, 0.04)
    first_rise = int(np.argmax(np.diff(L) >= 0))
    assert monotonic_range(0.2) == first_rise == 91
    assert monotonic_range(0.2) >= 25
    assert monotonic_range(1e-4, scan_limit=50) == 50
    with pytest.raises(DomainError):
        monotonic_range(0.0)


def test_ground_state_signal():
    p = np.zeros(25)
    p[0] = 1
    sig = synthesize_signal(p, "carrier", CFG)
    assert sig.p_down[0] == pytest.approx(1.0)
    w = rabi_freq("carrier", 0, CFG)
    assert np.allclose(sig.p_down, 0.5 * (1 + np.cos(w * sig.times)), atol=1e-14)


def test_thermal_like_signal_spectrum_peaks():
    n = np.arange(25)
    p = np.exp(-4.0) * 4.0**n / factorial(n)
    p /= p.sum()
    cfg = CFG.with_(eta=0.6)
    sig = synthesize_signal(p, "carrier", cfg)
    spec = np.abs(np.fft.rfft(2 * sig.p_down - 1))
    omega = 2 * math.pi * np.fft.rfftfreq(sig.times.size, sig.times[1] - sig.times[0])
    top = omega[np.argsort(spec)[-4:]]
    for w in rabi_freqs("carrier", 25, cfg)[[3, 4]]:
        assert np.min(np.abs(top - abs(w))) < 2 * (omega[1] - omega[0])


def test_synthesis_validation_and_noise():
    with pytest.raises(DomainError):
        synthesize_signal([0.5, 0.4], "carrier", CFG)
    with pytest.raises(DomainError):
        synthesize_signal([1.2, -0.2], "carrier", CFG)
    noisy = CFG.with_(noise_sigma=0.05, seed=4)
    a = synthesize_signal([1.0], "carrier", noisy)
    assert np.all((a.p_down >= 0) & (a.p_down <= 1))
    assert np.array_equal(a.p_down, synthesize_signal([1.0], "carrier", noisy).p_down)


def test_config_validation():
    for bad in (dict(eta=-0.1), dict(omega0=0), dict(noise_sigma=-1), dict(n_max=0),
                dict(sample_times=[0.0, 1.0, 0.5])):
        with pytest.raises(ConfigError):
            ReadoutConfig(**bad)


def test_single_level_round_trip():
    p = np.zeros(25)
    p[3] = 1
    res = reconstruct(synthesize_signal(p, "carrier", CFG), CFG)
    assert np.abs(res.p_n_hat - p).max() < 1e-6
    assert not res.flagged


def test_random_distribution_round_trip():
    p = np.random.default_rng(2).dirichlet(np.ones(25))
    res = reconstruct(synthesize_signal(p, "carrier", CFG), CFG)
    assert np.abs(res.p_n_hat - p).max() < 1e-2
    assert res.residual_norm < 1e-6


def test_short_records_are_rejected():
    sig = synthesize_signal([1.0], "carrier", CFG)
    with pytest.raises(ResolvabilityError):
        reconstruct(SignalTrace(sig.times[:1], sig.p_down[:1]), CFG)
    short = CFG.with_(sample_times=np.linspace(0, 1e-5, 100))
    with pytest.raises(ResolvabilityError):
        reconstruct(synthesize_signal([1.0], "carrier", short), short)
    # the carrier tone near n = 36 is almost static
    wide = CFG.with_(n_max=60)
    with pytest.raises(ResolvabilityError):
        reconstruct(synthesize_signal([1.0], "carrier", wide), wide)


def test_hybrid_recovers_high_levels():
    cfg = CFG.with_(n_max=60)
    p = np.random.default_rng(5).dirichlet(np.ones(60))
    res = hybrid_reconstruct(synthesize_signal(p, "carrier", cfg),
                             synthesize_signal(p, "blue_sideband", cfg), cfg)
    assert np.abs(res.p_n_hat - p).max() < 1e-3
    assert not np.any(res.ambiguity_flags)


def test_hybrid_with_population_below_split_only():
    cfg = CFG.with_(n_max=60)
    p = np.zeros(60)
    p[[0, 4, 11]] = [0.5, 0.3, 0.2]
    res = hybrid_reconstruct(synthesize_signal(p, "carrier", cfg),
                             synthesize_signal(p, "blue_sideband", cfg), cfg)
    assert np.abs(res.p_n_hat[:25] - p[:25]).max() < 1e-6
    assert np.abs(res.p_n_hat[25:]).max() < 1e-6


def test_hybrid_channel_checks_and_fallback():
    sig = synthesize_signal([1.0], "carrier", CFG)
    with pytest.raises(ConfigError):
        hybrid_reconstruct(sig, sig, CFG.with_(n_max=40))
    bsb = synthesize_signal([1.0], "blue_sideband", CFG)
    res = hybrid_reconstruct(sig, bsb, CFG)
    assert res.p_n_hat.size == 25 and res.p_n_hat[0] == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=25, max_size=25))
def test_forward_inverse_round_trip(weights):
    p = np.array(weights) / np.sum(weights)
    res = reconstruct(synthesize_signal(p, "carrier", CFG), CFG)
    assert np.abs(res.p_n_hat - p).max() < 1e-4
    assert res.p_n_hat.min() >= 0
    assert not res.flagged


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reconstruction_stays_non_negative_under_noise(seed):
    cfg = CFG.with_(noise_sigma=0.02, seed=seed)
    p = np.random.default_rng(seed).dirichlet(np.ones(25))
    res = reconstruct(synthesize_signal(p, "carrier", cfg), cfg)
    assert res.p_n_hat.min() >= 0
    assert res.p_n_hat.sum() <= 1 + 1e-9


def test_csv_round_trip_is_exact(tmp_path):
    sig = synthesize_signal(np.full(25, 1 / 25), "blue_sideband", CFG.with_(noise_sigma=0.01, seed=1))
    path = tmp_path / "sig.csv"
    sig.to_csv(path, {"eta": 0.2})
    back = SignalTrace.from_csv(path)
    assert back.channel is Channel.BLUE_SIDEBAND
    assert np.array_equal(back.times, sig.times) and np.array_equal(back.p_down, sig.p_down)
    first = path.read_bytes()
    sig.to_csv(path, {"eta": 0.2})
    assert path.read_bytes() == first


@pytest.mark.parametrize("text", ["a,b\n1,2\n", "t_seconds,p_down\n0.0,zero\n", ""])
def test_malformed_csv_rejected(text):
    with pytest.raises(ValueError):
        SignalTrace.from_csv(io.StringIO(text))
