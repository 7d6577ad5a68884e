import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvblind.calibration import security_fixture
from cvblind.constellation import compute_Z, constellation_from_config, gaussian_limit_z, make_ps_qam_for_mean
from cvblind.errors import NoPositiveRateError, UnphysicalStateError
from cvblind.secproof import (ChannelParams, TwoModeCovariance, covariance_matrix, entropy_g, holevo_bound,
                              key_rate, max_tolerable_noise, mutual_information, symplectic_eigenvalues,
                              symplectic_spectrum_numeric)
from oracles import g_entropy, gaussian_holevo, symplectic_numeric


@pytest.fixture(scope="module")
def fixture_case():
    fx = security_fixture()
    c = constellation_from_config(fx["constellation"])
    p = ChannelParams(T=fx["T"], eta=fx["eta"], eps_th=fx["eps_th"], beta=fx["beta"])
    return p, c


# -- parameters


def test_channel_params_ranges():
    with pytest.raises(ValueError):
        ChannelParams(T=1.2, eta=0.9)
    with pytest.raises(ValueError):
        ChannelParams(T=0.5, eta=0.0)
    with pytest.raises(ValueError):
        ChannelParams(T=0.5, eta=0.9, eps=-0.1)
    est = ChannelParams(T=0.5, eta=0.9, eps=-0.1, eps_is_estimate=True)
    assert est.eps == -0.1


def test_n_mean_mismatch_is_rejected(fixture_case):
    p, c = fixture_case
    with pytest.raises(ValueError):
        key_rate(ChannelParams(T=0.5, eta=0.9, n_mean=1.0), c)


# -- mutual information


def test_mutual_information_one_bit():
    assert mutual_information(ChannelParams(T=1, eta=1, n_mean=1)) == pytest.approx(1.0, abs=1e-15)


def test_mutual_information_zero_signal():
    assert mutual_information(ChannelParams(T=0.5, eta=0.9, n_mean=0.0)) == 0.0


def test_mutual_information_direct_formula():
    p = ChannelParams(T=0.5, eta=0.9, eps=0.05, eps_th=0.1, n_mean=0.5)
    assert mutual_information(p) == pytest.approx(0.2660065288907206, abs=1e-14)


# -- covariance matrix


def test_vacuum_covariance():
    m = covariance_matrix(0.0, 0.3, 0.0, 0.0)
    assert (m.a, m.b, m.c) == (1.0, 1.0, 0.0)


def test_zero_transmission_decouples():
    m = covariance_matrix(0.5, 0.0, 0.0, 1.7)
    assert m.b == 1.0 and m.c == 0.0


def test_covariance_substitution():
    m = covariance_matrix(0.5, 0.5, 0.1, 1.7)
    assert m.a == pytest.approx(2.0)
    assert m.b == pytest.approx(1.55)
    assert m.c == pytest.approx(np.sqrt(0.5) * 1.7)
    assert m.matrix.shape == (4, 4)


def test_unphysical_covariance():
    with pytest.raises(UnphysicalStateError):
        covariance_matrix(0.5, 1.0, 0.0, 3.0)


# -- symplectic spectrum


def test_identity_spectrum():
    assert symplectic_eigenvalues(TwoModeCovariance(1, 1, 0)) == pytest.approx((1, 1))


def test_product_state_spectrum():
    assert symplectic_eigenvalues(TwoModeCovariance(3.5, 3.5, 0)) == pytest.approx((3.5, 3.5))


def _random_physical(rng):
    n = rng.uniform(0, 5)
    T = rng.uniform(0, 1)
    eps = rng.uniform(0, 0.5)
    z = rng.uniform(0, 1) * gaussian_limit_z(n)
    return covariance_matrix(n, T, eps, z)


def test_closed_form_matches_brute_force_1000(rng):
    worst = 0.0
    for _ in range(1000):
        m = _random_physical(rng)
        closed = np.array(symplectic_eigenvalues(m))
        brute = symplectic_numeric(m.matrix)
        worst = max(worst, np.max(np.abs(closed - brute)))
        assert min(closed) >= 1 - 1e-9
    assert worst < 1e-9


def test_package_numeric_spectrum_agrees(rng):
    m = _random_physical(rng)
    assert np.allclose(symplectic_spectrum_numeric(m.matrix), symplectic_eigenvalues(m), atol=1e-9)


# -- entropy and Holevo bound


def test_g_at_zero_is_exact():
    assert entropy_g(0.0) == 0.0


def test_g_monotone_and_matches_thermal_entropy():
    x = np.linspace(0, 20, 401)
    g = entropy_g(x)
    assert np.all(np.diff(g) > 0)
    for xi in (0.1, 1.0, 7.3):
        assert entropy_g(xi) == pytest.approx(g_entropy(2 * xi + 1), abs=1e-12)


def test_vacuum_holevo_is_zero():
    assert holevo_bound(TwoModeCovariance(1, 1, 0)) == pytest.approx(0, abs=1e-15)


def test_pure_gaussian_state_has_no_leak():
    n = 0.8
    m = covariance_matrix(n, 1.0, 0.0, gaussian_limit_z(n))
    assert holevo_bound(m) == pytest.approx(0, abs=1e-9)


def test_holevo_against_independent_gaussian_reference():
    n, T, eps = 0.5, 0.5, 0.1
    z = gaussian_limit_z(n)
    m = covariance_matrix(n, T, eps, z)
    assert holevo_bound(m) == pytest.approx(gaussian_holevo(m.a, m.b, m.c), abs=1e-6)


def test_holevo_reference_on_random_states(rng):
    for _ in range(50):
        m = _random_physical(rng)
        assert holevo_bound(m) == pytest.approx(gaussian_holevo(m.a, m.b, m.c), abs=1e-8)


def test_homodyne_variant_runs():
    m = covariance_matrix(0.5, 0.5, 0.1, gaussian_limit_z(0.5))
    assert holevo_bound(m, "homodyne") > 0
    with pytest.raises(ValueError):
        holevo_bound(m, "balanced")


# -- key rate


def test_large_noise_gives_negative_rate(fixture_case):
    p, c = fixture_case
    assert key_rate(p.with_eps(5.0), c) < 0


def test_lossless_near_gaussian_rate_is_beta_times_information():
    c = make_ps_qam_for_mean(64, 0.5, 0.25)
    p = ChannelParams(T=1, eta=1, eps=0, beta=0.95)
    # dense shaping leaves Eve ~4e-5 bit through the residual non-Gaussianity
    assert key_rate(p, c) == pytest.approx(0.95 * mutual_information(p, 0.5), abs=1e-4)


def test_rate_strictly_decreasing_in_eps(fixture_case):
    p, c = fixture_case
    rates = [key_rate(p.with_eps(e), c) for e in np.linspace(0, 0.3, 50)]
    assert np.all(np.diff(rates) < 0)


def test_rate_nondecreasing_in_transmission(fixture_case):
    p, c = fixture_case
    rates = [key_rate(ChannelParams(T=t, eta=p.eta, eps=0.05, beta=p.beta), c) for t in np.linspace(0.05, 1, 50)]
    assert np.all(np.diff(rates) >= -1e-12)


def test_max_noise_fixture(fixture_case):
    p, c = fixture_case
    assert max_tolerable_noise(p, c) == pytest.approx(0.126, abs=0.02)


def test_max_noise_root_is_a_sign_change(fixture_case):
    p, c = fixture_case
    eps = max_tolerable_noise(p, c)
    assert key_rate(p.with_eps(eps - 1e-5), c) > 0
    assert key_rate(p.with_eps(eps + 1e-5), c) < 0


def test_max_noise_grows_with_lossless_channel(fixture_case):
    p, c = fixture_case
    ideal = ChannelParams(T=1, eta=1, beta=p.beta)
    assert max_tolerable_noise(ideal, c) > max_tolerable_noise(p, c)


def test_vanishing_beta_has_no_positive_rate(fixture_case):
    _, c = fixture_case
    with pytest.raises(NoPositiveRateError):
        max_tolerable_noise(ChannelParams(T=0.5, eta=0.9, beta=1e-6), c)


@given(st.floats(0.0, 3.0), st.floats(0.0, 1.0), st.floats(0.0, 0.5), st.floats(0.0, 1.0))
def test_gaussian_bounded_states_are_physical(n, T, eps, u):
    m = covariance_matrix(n, T, eps, u * gaussian_limit_z(n))
    assert min(symplectic_eigenvalues(m)) >= 1 - 1e-9
    assert holevo_bound(m) >= -1e-9


def test_z_with_fixture_is_below_gaussian(fixture_case):
    _, c = fixture_case
    assert compute_Z(c) < gaussian_limit_z(2.0)
