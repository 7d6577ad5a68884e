import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvblind.constellation import (ADAPTIVE_TAIL, TAIL_TOLERANCE, Constellation, annihilation, choose_cutoff,
                                   compute_W, compute_Z, constellation_from_config, correlation_terms, density_operator,
                                   gaussian_limit_z, make_ps_qam, make_ps_qam_for_mean, make_psk,
                                   mean_photon_number, truncation_tail)
from cvblind.errors import IllConditionedStateError, InvalidConstellationError, TruncationError
from oracles import gram_correlations

# frozen from the overlap-matrix oracle (tests/oracles.py)
QPSK_035_CROSS = 0.668032360670
QPSK_035_Z = 1.33606472134
QPSK_035_W = 0.0533241170912


@pytest.fixture
def qpsk():
    return make_psk(4, np.sqrt(0.35))


# -- construction


def test_qam4_nu0_is_uniform_qpsk():
    c = make_ps_qam(4, nu=0.0, scale=1.0)
    assert np.allclose(c.probs, 0.25)
    assert np.allclose(np.abs(c.points), np.sqrt(2))


def test_qam64_for_mean_is_normalized():
    c = make_ps_qam_for_mean(64, 0.5, scale=0.25)
    assert len(c) == 64
    assert abs(c.probs.sum() - 1) < 1e-12
    assert np.all(c.probs > 0)
    assert abs(mean_photon_number(c) - 0.5) < 1e-8


def test_mb_shaping_favours_inner_points():
    c = make_ps_qam(64, nu=0.3, scale=0.5)
    energy = np.abs(c.points) ** 2
    assert c.probs[np.argmin(energy)] > c.probs[np.argmax(energy)]


@pytest.mark.parametrize("order", [2, 8, 9, 25, 32])
def test_bad_qam_order(order):
    with pytest.raises(InvalidConstellationError):
        make_ps_qam(order, 0.0, 1.0)


@pytest.mark.parametrize("points, probs", [
    ([0, 1], [0.5, 0.4]),
    ([0, 1], [1.0, 0.0]),
    ([1, 1], [0.5, 0.5]),
    ([], []),
    ([np.nan], [1.0]),
])
def test_constellation_invariants(points, probs):
    with pytest.raises(InvalidConstellationError):
        Constellation(points, probs)


def test_unreachable_mean_is_reported():
    with pytest.raises(InvalidConstellationError):
        make_ps_qam_for_mean(4, 10.0, scale=0.1)


def test_arrays_are_frozen(qpsk):
    with pytest.raises(ValueError):
        qpsk.points[0] = 0


def test_from_config():
    c = constellation_from_config({"kind": "qam", "order": 16, "scale": 0.5, "n_mean": 0.8})
    assert abs(c.mean_photon_number - 0.8) < 1e-8
    p = constellation_from_config({"kind": "psk", "order": 4, "n_mean": 0.25})
    assert abs(p.mean_photon_number - 0.25) < 1e-12
    with pytest.raises(InvalidConstellationError):
        constellation_from_config({"kind": "hex"})


# -- photon number and density operator


def test_vacuum_photon_number():
    assert mean_photon_number(Constellation([0], [1])) == 0


def test_psk_photon_number():
    assert abs(mean_photon_number(make_psk(4, 0.7)) - 0.49) < 1e-15


def test_vacuum_density_operator():
    rho = density_operator(Constellation([0], [1]), n_cut=4).matrix
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    assert np.allclose(rho, expected, atol=0)


def test_density_operator_invariants():
    c = make_ps_qam_for_mean(64, 0.5, scale=0.25)
    rho = density_operator(c)
    m = rho.matrix
    assert np.max(np.abs(m - m.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(m).min() > -1e-10
    assert 1 - 1e-10 <= rho.trace() <= 1 + 1e-12


def test_photon_number_expectation_in_fock_basis():
    c = make_psk(4, 0.5)
    rho = density_operator(c)
    n_op = np.diag(np.arange(rho.dim, dtype=float))
    assert abs(rho.expectation(n_op) - 0.25) < 1e-8


def test_truncation_error_when_cutoff_small():
    c = make_psk(4, 2.0)
    with pytest.raises(TruncationError):
        density_operator(c, n_cut=5)


def test_adaptive_cutoff_meets_tail():
    c = make_ps_qam_for_mean(64, 2.0, scale=0.4)
    n = choose_cutoff(c)
    assert truncation_tail(c, n) < ADAPTIVE_TAIL
    assert truncation_tail(c, n - 1) >= ADAPTIVE_TAIL


def test_explicit_cutoff_accepted_at_admissibility_bound():
    c = make_ps_qam_for_mean(64, 2.0, scale=0.4)
    n = choose_cutoff(c, TAIL_TOLERANCE)
    assert density_operator(c, n).dim == n
    with pytest.raises(TruncationError):
        density_operator(c, n - 1)


def test_annihilation_lowers():
    a = annihilation(5)
    assert np.allclose(a @ np.eye(5)[:, 3], np.sqrt(3) * np.eye(5)[:, 2])


# -- Z and W


def test_single_coherent_state_has_zero_w():
    c = Constellation([0.8 + 0.3j], [1.0])
    assert abs(compute_W(c)) < 1e-10


def test_vacuum_z_is_zero():
    assert abs(compute_Z(Constellation([0], [1]))) < 1e-12


def test_qpsk_against_gram_oracle(qpsk):
    cross, w = correlation_terms(qpsk)
    o_cross, o_w = gram_correlations(qpsk.points, qpsk.probs)
    assert abs(cross - o_cross) < 1e-10
    assert abs(w - o_w) < 1e-10


def test_qpsk_frozen_values(qpsk):
    assert abs(compute_Z(qpsk) - QPSK_035_Z) < 1e-9
    assert abs(compute_W(qpsk) - QPSK_035_W) < 1e-9
    assert abs(correlation_terms(qpsk)[0] - QPSK_035_CROSS) < 1e-9


def test_ps16qam_against_gram_oracle():
    # overlap matrix condition number ~1e5 here; much denser grids defeat the oracle itself
    c = make_ps_qam(16, nu=0.2, scale=0.6)
    cross, w = correlation_terms(c)
    o_cross, o_w = gram_correlations(c.points, c.probs)
    assert abs(cross - o_cross) < 1e-8
    assert abs(w - o_w) < 1e-8


def test_z_penalty_is_subtractive(qpsk):
    assert compute_Z(qpsk, eps=0.1) < compute_Z(qpsk, eps=0.0)
    expected = QPSK_035_Z - np.sqrt(2 * 0.1 * QPSK_035_W)
    assert abs(compute_Z(qpsk, eps=0.1) - expected) < 1e-9


def test_negative_eps_rejected(qpsk):
    with pytest.raises(ValueError):
        compute_Z(qpsk, eps=-0.1)


def test_gaussian_limit_dense_qam():
    c = make_ps_qam_for_mean(64, 0.5, scale=0.25)
    ratio = compute_Z(c) / gaussian_limit_z(0.5)
    assert 0.99 <= ratio <= 1 + 1e-9


@pytest.mark.parametrize("factory", [
    lambda: make_psk(4, np.sqrt(0.35)),
    lambda: make_ps_qam(16, 0.2, 0.4),
    lambda: make_ps_qam_for_mean(64, 2.0, 0.4),
])
def test_fock_doubling_converged(factory):
    c = factory()
    n = choose_cutoff(c)
    z1, w1 = compute_Z(c, n), compute_W(c, n)
    z2, w2 = compute_Z(c, 2 * n), compute_W(c, 2 * n)
    assert abs(z1 - z2) < 1e-8
    assert abs(w1 - w2) < 1e-8


def test_phase_rotation_invariance(qpsk):
    c = make_ps_qam(16, 0.2, 0.4)
    for const in (qpsk, c):
        r = const.rotated(0.731)
        assert abs(compute_Z(r) - compute_Z(const)) < 1e-9
        assert abs(compute_W(r) - compute_W(const)) < 1e-9


def test_invalid_state_detected():
    from cvblind.constellation import _support
    bad = np.diag([1.0, -0.5])
    with pytest.raises(IllConditionedStateError):
        _support(bad)


amplitudes = st.complex_numbers(max_magnitude=1.6, allow_nan=False, allow_infinity=False)


@st.composite
def constellations(draw):
    m = draw(st.integers(1, 8))
    pts = draw(st.lists(amplitudes, min_size=m, max_size=m))
    pts = np.array(pts)
    if m > 1:
        d = np.abs(pts[:, None] - pts[None, :]) + np.eye(m) * 10
        if d.min() < 1e-3:
            pts = pts + 0.05 * np.exp(1j * np.arange(m))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=m, max_size=m)))
    return Constellation(pts, w / w.sum())


@given(constellations())
def test_z_never_exceeds_gaussian_limit(c):
    z = compute_Z(c)
    assert z <= gaussian_limit_z(mean_photon_number(c)) + 1e-9


@given(constellations(), st.floats(0, 2 * np.pi))
def test_w_is_nonnegative_and_rotation_invariant(c, phase):
    w = compute_W(c)
    assert w >= 0
    assert abs(compute_W(c.rotated(phase)) - w) < 1e-9
