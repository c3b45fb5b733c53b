import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from ionwalk.errors import ConfigError, CoverageError, DomainError, NumericError, TruncationError
from ionwalk.fock import (
    FockState,
    TruncationConfig,
    check_guard,
    cubic_b,
    cubic_generator,
    displacement,
    expm,
    hermite_functions,
    ladder_ops,
    moments,
    number_distribution,
    number_op,
    position_distribution,
    quadratures,
    rotation,
    squeeze,
)

CFG = TruncationConfig(dim=60)


def coherent_amplitudes(alpha, dim):
    """Analytic ``e^{-|a|^2/2} a^n / sqrt(n!)``."""
    n = np.arange(dim)
    alpha = complex(alpha)
    if alpha == 0:
        out = np.zeros(dim, complex)
        out[0] = 1
        return out
    logmag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def test_truncation_config_validation():
    assert TruncationConfig(dim=10).guard_levels == 1
    assert TruncationConfig(dim=256).guard_levels == 26
    with pytest.raises(ConfigError):
        TruncationConfig(dim=1)
    with pytest.raises(ConfigError):
        TruncationConfig(dim=10, edge_guard=0.0)


def test_ladder_commutator_away_from_edge():
    a, ad = ladder_ops(CFG)
    comm = a @ ad - ad @ a
    assert np.allclose(comm[:-1, :-1], np.eye(CFG.dim - 1))
    assert np.allclose(ad @ a, number_op(CFG))
    assert not a.flags.writeable


def test_quadratures_hermitian_and_vacuum_variance():
    x, p = quadratures(CFG)
    assert np.allclose(x, x.conj().T) and np.allclose(p, p.conj().T)
    m = moments(FockState.vacuum(CFG))
    assert m.var_x == pytest.approx(0.5, abs=1e-14)
    assert m.var_p == pytest.approx(0.5, abs=1e-14)
    assert m.excess_var_x == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("alpha", [0.3, 1 + 0.5j, -2.1j, 3.0])
def test_displacement_matches_coherent_state(alpha):
    v = displacement(alpha, CFG)[:, 0]
    assert np.abs(v - coherent_amplitudes(alpha, CFG.dim)).max() < 1e-12


def test_displacement_cached_and_read_only():
    assert displacement(0.5, CFG) is displacement(0.5, CFG)
    with pytest.raises(ValueError):
        displacement(0.5, CFG)[0, 0] = 1


def test_coherent_state_moments():
    alpha = 1.2 - 0.7j
    s = FockState.pure(displacement(alpha, CFG)[:, 0])
    m = moments(s)
    assert m.mean_x == pytest.approx(math.sqrt(2) * alpha.real, abs=1e-12)
    assert m.mean_p == pytest.approx(math.sqrt(2) * alpha.imag, abs=1e-12)
    assert m.var_x == pytest.approx(0.5, abs=1e-12)
    assert m.mean_n == pytest.approx(abs(alpha) ** 2, abs=1e-12)
    mixed = moments(FockState.mixed(s.rho))
    assert np.allclose(mixed.as_tuple(), m.as_tuple(), atol=1e-12)


def test_squeeze_positive_r_reduces_var_x():
    r = 0.4
    m = moments(FockState.pure(squeeze(r, CFG)[:, 0]))
    assert m.var_x == pytest.approx(0.5 * math.exp(-2 * r), abs=1e-10)
    assert m.var_p == pytest.approx(0.5 * math.exp(2 * r), abs=1e-10)


def test_cubic_forms_agree_below_the_edge():
    g1 = cubic_generator(0.01j, CFG, form=1)
    g2 = cubic_generator(0.01j, CFG, form=2)
    assert np.abs(g1 - g2)[:-3, :-3].max() < 1e-14
    B = cubic_b(0.002, CFG)
    assert np.allclose(B.conj().T @ B, np.eye(CFG.dim), atol=1e-12)
    with pytest.raises(ConfigError):
        cubic_generator(0.1, CFG, form=3)


def test_rotation_rotates_coherent_state():
    alpha, th = 1.5, 0.7
    v = rotation(th, CFG) @ displacement(alpha, CFG)[:, 0]
    assert np.abs(v - coherent_amplitudes(alpha * np.exp(1j * th), CFG.dim)).max() < 1e-12


def test_expm_rejects_non_finite():
    with pytest.raises(NumericError):
        expm(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(ConfigError):
        expm(np.zeros((2, 3)))


def test_guard_band_raises_on_leakage():
    v = np.zeros(20, complex)
    v[-1] = 1
    with pytest.raises(TruncationError) as err:
        check_guard(v, TruncationConfig(dim=20))
    assert err.value.guard_population == pytest.approx(1.0)
    with pytest.raises(TruncationError):
        displacement(3.0, TruncationConfig(dim=12))


def test_fock_state_validation():
    with pytest.raises(DomainError):
        FockState.pure([1, 1])
    with pytest.raises(DomainError):
        FockState.mixed(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(DomainError):
        FockState.mixed(np.diag([1.5, -0.5]))
    with pytest.raises(NumericError):
        FockState.pure([np.nan, 0])
    with pytest.raises(ConfigError):
        FockState()
    s = FockState.mixed(np.diag([0.5, 0.5, 0.0]))
    assert s.purity() == pytest.approx(0.5)
    assert not s.is_pure
    with pytest.raises(AttributeError):
        s.amplitudes


def test_number_distribution_normalized():
    pn = number_distribution(FockState.pure(displacement(2.0, CFG)[:, 0]))
    assert pn.min() >= 0
    assert pn.sum() == pytest.approx(1.0, abs=1e-9)


def test_hermite_functions_orthonormal():
    x = np.linspace(-15, 15, 6001)
    psi = hermite_functions(40, x)
    gram = (psi * (x[1] - x[0])) @ psi.T
    assert np.abs(gram - np.eye(40)).max() < 1e-10


def test_position_distribution_of_coherent_state():
    alpha = 1.3
    x = np.linspace(-8, 10, 721)
    dens = position_distribution(FockState.pure(displacement(alpha, CFG)[:, 0]), x)
    exact = np.exp(-((x - math.sqrt(2) * alpha) ** 2)) / math.sqrt(math.pi)
    assert np.abs(dens - exact).max() < 1e-12
    with pytest.raises(CoverageError):
        position_distribution(FockState.pure(displacement(alpha, CFG)[:, 0]), np.linspace(-1, 1, 21))


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_displacement_unitary(re, im):
    D = displacement(complex(re, im), CFG)
    # unitarity holds on the block the state actually occupies
    assert np.abs((D.conj().T @ D - np.eye(CFG.dim))[:30, :30]).max() < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_displacement_composition(ar, ai, br, bi):
    a, b = complex(ar, ai), complex(br, bi)
    lhs = displacement(a, CFG) @ displacement(b, CFG)[:, 0]
    phase = np.exp(1j * (a * b.conjugate()).imag)
    rhs = phase * displacement(a + b, CFG)[:, 0]
    assert np.abs(lhs - rhs)[:35].max() < 1e-9
