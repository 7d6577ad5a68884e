"""Asymptotic key rate for discrete-modulated CV-QKD with heterodyne detection.

The key rate is ``beta * I_BA - chi_BE``.  Receiver efficiency and electronic
noise are treated as trusted: they degrade Bob's mutual information but the
Holevo bound is evaluated on the channel-only covariance matrix.
"""
from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_in_range
from .constellation import correlation_terms, mean_photon_number, z_from_terms
from .errors import NoPositiveRateError, UnphysicalStateError

PHYSICAL_TOL = 1e-9

OMEGA = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)


@dataclass(frozen=True)
class ChannelParams:
    T: float
    eta: float
    eps: float = 0.0
    eps_th: float = 0.0
    n_mean: float = None
    beta: float = 0.95
    eps_is_estimate: bool = False

    def __post_init__(self):
        check_in_range(self.T, "T", 0.0, 1.0)
        check_in_range(self.eta, "eta", 0.0, 1.0, low_open=True)
        check_in_range(self.beta, "beta", 0.0, 1.0, low_open=True)
        check_in_range(self.eps_th, "eps_th", 0.0)
        if self.n_mean is not None:
            check_in_range(self.n_mean, "n_mean", 0.0)
        if self.eps_is_estimate:
            check_in_range(self.eps, "eps")
        else:
            check_in_range(self.eps, "eps", 0.0)

    def with_eps(self, eps):
        return replace(self, eps=eps)


@dataclass(frozen=True)
class TwoModeCovariance:
    """Symmetric two-mode covariance ``[[a I, c Z], [c Z, b I]]`` in SNU."""

    a: float
    b: float
    c: float

    @property
    def matrix(self):
        sz = np.diag([1.0, -1.0])
        eye = np.eye(2)
        return np.block([[self.a * eye, self.c * sz], [self.c * sz, self.b * eye]])


def mutual_information(p, n_mean=None):
    """Bob-Alice mutual information in bits per symbol."""
    n = p.n_mean if n_mean is None else n_mean
    if n is None:
        raise ValueError("mean photon number not given")
    snr = 2.0 * p.T * p.eta * n / (2.0 + p.T * p.eta * p.eps + 2.0 * p.eps_th)
    return float(np.log2(1.0 + snr))


def covariance_matrix(n_mean, T, eps, Z):
    v = 2.0 * n_mean + 1.0
    m = TwoModeCovariance(v, T * v + 1.0 - T + T * eps, np.sqrt(T) * Z)
    nu = symplectic_eigenvalues(m)
    if min(nu) < 1.0 - PHYSICAL_TOL:
        raise UnphysicalStateError(f"symplectic eigenvalues {nu} violate nu >= 1")
    return m


def symplectic_eigenvalues(m):
    """Closed-form symplectic spectrum ``(nu_plus, nu_minus)``."""
    delta = m.a ** 2 + m.b ** 2 - 2.0 * m.c ** 2
    det = m.a * m.b - m.c ** 2
    disc = delta ** 2 - 4.0 * det ** 2
    if disc < -PHYSICAL_TOL or det < -PHYSICAL_TOL:
        raise UnphysicalStateError(f"negative discriminant {disc:.3g} in symplectic spectrum")
    root = np.sqrt(max(disc, 0.0))
    plus = np.sqrt(max((delta + root) / 2.0, 0.0))
    minus = np.sqrt(max((delta - root) / 2.0, 0.0))
    return float(plus), float(minus)


def symplectic_spectrum_numeric(gamma):
    """Symplectic eigenvalues from the modulus spectrum of ``i Omega gamma``.

    Each value appears twice in that spectrum; returned in descending order.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0] // 2
    omega = np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))
    moduli = np.sort(np.abs(np.linalg.eigvals(1j * omega @ gamma)))[::-1]
    return moduli[::2]


def entropy_g(x):
    """``g(x) = (x+1) log2(x+1) - x log2 x`` with ``g(0) = 0``."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    out = (x + 1.0) * np.log2(x + 1.0) - np.where(x > 0, x * np.log2(safe), 0.0)
    out = np.where(x > 0, out, 0.0)
    return out if out.ndim else float(out)


def holevo_bound(m, detection="heterodyne"):
    """Eve's information ``S(AB) - S(A|B)`` in bits, reverse reconciliation."""
    nu_ab = symplectic_eigenvalues(m)
    if min(nu_ab) < 1.0 - PHYSICAL_TOL:
        raise UnphysicalStateError(f"symplectic eigenvalues {nu_ab} violate nu >= 1")
    if detection == "heterodyne":
        nu_cond = m.a - m.c ** 2 / (m.b + 1.0)
    elif detection == "homodyne":
        nu_cond = np.sqrt(m.a * (m.a - m.c ** 2 / m.b))
    else:
        raise ValueError(f"unknown detection {detection!r}")
    if nu_cond < 1.0 - PHYSICAL_TOL:
        raise UnphysicalStateError(f"conditional eigenvalue {nu_cond:.6g} < 1")
    s_ab = sum(entropy_g(max(nu - 1.0, 0.0) / 2.0) for nu in nu_ab)
    s_cond = entropy_g(max(nu_cond - 1.0, 0.0) / 2.0)
    return float(s_ab - s_cond)


def _photon_number(p, c):
    n = mean_photon_number(c)
    if p.n_mean is not None and abs(p.n_mean - n) > 1e-6:
        raise ValueError(f"ChannelParams.n_mean={p.n_mean} disagrees with constellation <n>={n}")
    return n


def _rate_from_terms(p, n, cross, w):
    z = z_from_terms(cross, w, p.eps)
    m = covariance_matrix(n, p.T, p.eps, z)
    return p.beta * mutual_information(p, n) - holevo_bound(m)


def key_rate(p, c, n_cut=None):
    """Secret key rate in bits per symbol; negative when no key can be extracted."""
    n = _photon_number(p, c)
    cross, w = correlation_terms(c, n_cut)
    return float(_rate_from_terms(p, n, cross, w))


def max_tolerable_noise(p, c, n_cut=None, lo=0.0, hi=2.0, tol=1e-6):
    """Excess noise (SNU) at which the key rate crosses zero, by bisection."""
    n = _photon_number(p, c)
    cross, w = correlation_terms(c, n_cut)

    def rate(eps):
        return _rate_from_terms(p.with_eps(eps), n, cross, w)

    if rate(lo) <= 0:
        raise NoPositiveRateError(f"key rate is not positive at eps={lo}")
    if rate(hi) > 0:
        return float(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rate(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
