"""Discrete coherent-state constellations and their Fock-space description.

Amplitudes are stored in the photon-number convention, ``|alpha_k|**2`` is the
mean photon number of symbol ``k``.  The SNU-scaled symbol used by the
parameter estimators is ``a = sqrt(2) * alpha`` so that ``E[|a|^2] = 2<n>``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .errors import IllConditionedStateError, InvalidConstellationError, TruncationError

TAIL_TOLERANCE = 1e-10
# Z and W converge like the square root of the discarded mass, so the
# automatic cutoff keeps far less than the admissibility bound above
ADAPTIVE_TAIL = 1e-16
SUPPORT_CUTOFF = 1e-12
_MAX_CUTOFF = 4096


@dataclass(frozen=True, eq=False)
class Constellation:
    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=np.complex128).ravel()
        probs = np.array(self.probs, dtype=np.float64).ravel()
        if points.size == 0 or points.shape != probs.shape:
            raise InvalidConstellationError("points and probs must be non-empty and of equal length")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(probs))):
            raise InvalidConstellationError("non-finite amplitude or probability")
        if np.any(probs <= 0):
            raise InvalidConstellationError("every probability must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidConstellationError(f"probabilities sum to {probs.sum()!r}, not 1")
        if np.unique(points).size != points.size:
            raise InvalidConstellationError("constellation points must be pairwise distinct")
        points.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.points.size

    @property
    def mean_photon_number(self):
        return mean_photon_number(self)

    def rotated(self, phase):
        """Copy with every amplitude multiplied by ``exp(1j*phase)``."""
        return Constellation(self.points * np.exp(1j * phase), self.probs)


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Dense operator in the truncated number basis ``|0>..|dim-1>``."""

    matrix: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0]

    def trace(self):
        return float(np.trace(self.matrix).real)

    def expectation(self, op):
        return complex(np.trace(self.matrix @ op))


def _normalized(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return probs / probs.sum()


def _square_grid(order):
    side = int(round(np.sqrt(order)))
    if order < 4 or side * side != order or side % 2:
        raise InvalidConstellationError(
            f"order={order} is not a square QAM with an even side (4, 16, 64, 256, ...)")
    levels = np.arange(-side + 1, side, 2, dtype=np.float64)
    return (levels[:, None] + 1j * levels[None, :]).ravel()


def make_ps_qam(order, nu=0.0, scale=1.0):
    """Square QAM with Maxwell-Boltzmann shaping ``p_k ~ exp(-nu |alpha_k|^2)``."""
    if nu < 0:
        raise InvalidConstellationError("Maxwell-Boltzmann rate nu must be >= 0")
    if scale <= 0:
        raise InvalidConstellationError("scale must be > 0")
    points = _square_grid(order) * scale
    energy = np.abs(points) ** 2
    # shift by the minimum energy so large nu does not underflow every weight
    weights = np.exp(-nu * (energy - energy.min()))
    return Constellation(points, _normalized(weights))


def make_ps_qam_for_mean(order, n_mean, scale, tol=1e-9):
    """Shaped QAM at a fixed ``scale`` whose mean photon number is ``n_mean``.

    Bisects on the Maxwell-Boltzmann rate; ``<n>`` is decreasing in ``nu``.
    Only targets between the innermost ring energy and the uniform average
    are reachable.
    """
    grid = _square_grid(order) * scale
    energy = np.abs(grid) ** 2
    upper = energy.mean()
    lower = energy.min()
    if not lower < n_mean <= upper:
        raise InvalidConstellationError(
            f"<n>={n_mean} unreachable at scale={scale}: need {lower:.6g} < <n> <= {upper:.6g}")

    def mean_at(nu):
        w = np.exp(-nu * (energy - lower))
        return float(np.dot(w, energy) / w.sum())

    if abs(mean_at(0.0) - n_mean) <= tol:
        return make_ps_qam(order, 0.0, scale)
    lo, hi = 0.0, 1.0
    while mean_at(hi) > n_mean:
        lo, hi = hi, 2.0 * hi
    while True:
        mid = 0.5 * (lo + hi)
        value = mean_at(mid)
        if abs(value - n_mean) <= tol or hi - lo < 1e-15 * max(hi, 1.0):
            return make_ps_qam(order, mid, scale)
        if value > n_mean:
            lo = mid
        else:
            hi = mid


def make_psk(order, radius):
    """Uniform PSK ring, QPSK for ``order=4`` with points at odd multiples of pi/4."""
    if order < 1 or radius < 0:
        raise InvalidConstellationError("need order >= 1 and radius >= 0")
    if order == 1:
        return Constellation([radius + 0j], [1.0])
    phases = np.pi * (2 * np.arange(order) + 1) / order
    return Constellation(radius * np.exp(1j * phases), np.full(order, 1.0 / order))


def mean_photon_number(c):
    return float(np.dot(c.probs, np.abs(c.points) ** 2))


def truncation_tail(c, n_cut):
    """Probability mass of ``rho`` above the cutoff, ``sum_k p_k P(Poisson(|a_k|^2) >= n_cut)``."""
    return float(np.dot(c.probs, poisson.sf(n_cut - 1, np.abs(c.points) ** 2)))


def choose_cutoff(c, tol=ADAPTIVE_TAIL):
    n_cut = max(2, int(np.ceil(np.max(np.abs(c.points) ** 2))) + 1)
    while truncation_tail(c, n_cut) >= tol:
        n_cut += 1
        if n_cut > _MAX_CUTOFF:
            raise TruncationError("no cutoff below the hard limit meets the tail tolerance")
    return n_cut


def _resolve_cutoff(c, n_cut, tol=TAIL_TOLERANCE):
    if n_cut is None:
        return choose_cutoff(c)
    n_cut = int(n_cut)
    if n_cut < 1:
        raise TruncationError("n_cut must be a positive integer")
    tail = truncation_tail(c, n_cut)
    if tail >= tol:
        raise TruncationError(
            f"n_cut={n_cut} leaves a tail of {tail:.3g} >= {tol:g}; use n_cut >= {choose_cutoff(c, tol)}")
    return n_cut


def coherent_amplitudes(points, n_cut):
    """Rows of ``<n|alpha_k>`` for ``n < n_cut`` via the stable ratio recursion."""
    points = np.asarray(points, dtype=np.complex128).ravel()
    ratios = np.ones((points.size, n_cut), dtype=np.complex128)
    if n_cut > 1:
        ratios[:, 1:] = points[:, None] / np.sqrt(np.arange(1, n_cut))[None, :]
    amps = np.cumprod(ratios, axis=1)
    return amps * np.exp(-0.5 * np.abs(points) ** 2)[:, None]


def density_operator(c, n_cut=None):
    n_cut = _resolve_cutoff(c, n_cut)
    kets = coherent_amplitudes(c.points, n_cut)
    rho = (kets.T * c.probs) @ kets.conj()
    return FockOperator(0.5 * (rho + rho.conj().T))


def annihilation(n_cut):
    return np.diag(np.sqrt(np.arange(1, n_cut, dtype=np.float64)), 1)


def _support(rho):
    lam, vecs = np.linalg.eigh(rho)
    lam_max = lam[-1]
    if lam_max <= 0 or lam[0] < -1e-10:
        raise IllConditionedStateError(
            f"density operator eigenvalues span [{lam[0]:.3g}, {lam_max:.3g}]; not a valid state")
    keep = lam > SUPPORT_CUTOFF * lam_max
    return lam[keep], vecs[:, keep]


def correlation_terms(c, n_cut=None):
    """Return ``(tr(rho^1/2 a rho^1/2 a^dag), W)`` for constellation ``c``.

    ``rho^{-1/2}`` is the pseudo-inverse square root on the eigenvectors whose
    eigenvalue exceeds ``SUPPORT_CUTOFF * lambda_max``.
    """
    n_cut = _resolve_cutoff(c, n_cut)
    kets = coherent_amplitudes(c.points, n_cut)
    rho = (kets.T * c.probs) @ kets.conj()
    rho = 0.5 * (rho + rho.conj().T)
    lam, vecs = _support(rho)
    root = np.sqrt(lam)
    sqrt_rho = (vecs * root) @ vecs.conj().T
    inv_sqrt_rho = (vecs / root) @ vecs.conj().T
    a = annihilation(n_cut)

    cross = float(np.trace(sqrt_rho @ a @ sqrt_rho @ a.T).real)

    a_rho = sqrt_rho @ a @ inv_sqrt_rho
    mapped = kets @ a_rho.T  # row k holds a_rho |alpha_k>
    second = np.sum(np.abs(mapped) ** 2, axis=1)
    first = np.sum(kets.conj() * mapped, axis=1)
    w = float(np.dot(c.probs, second - np.abs(first) ** 2))
    return cross, max(w, 0.0)


def compute_W(c, n_cut=None):
    return correlation_terms(c, n_cut)[1]


def z_from_terms(cross, w, eps):
    if eps < 0:
        raise ValueError("excess noise for the security proof must be >= 0")
    return 2.0 * cross - np.sqrt(2.0 * eps * w)


def compute_Z(c, n_cut=None, eps=0.0):
    cross, w = correlation_terms(c, n_cut)
    return z_from_terms(cross, w, eps)


def gaussian_limit_z(n_mean):
    """Correlation of Gaussian modulation at the same ``<n>``: ``2 sqrt(<n>^2 + <n>)``."""
    return 2.0 * np.sqrt(n_mean * n_mean + n_mean)


def constellation_from_config(cfg):
    """Build a constellation from a mapping as found in the JSON config files.

    Recognised keys: ``kind`` (``"qam"`` default or ``"psk"``), ``order``,
    ``scale``, and either ``nu`` or ``n_mean``; PSK uses ``radius`` or ``n_mean``.
    """
    kind = cfg.get("kind", "qam").lower()
    order = int(cfg.get("order", 64))
    if kind == "psk":
        radius = cfg.get("radius")
        if radius is None:
            radius = np.sqrt(float(cfg["n_mean"]))
        return make_psk(order, float(radius))
    if kind != "qam":
        raise InvalidConstellationError(f"unknown constellation kind {kind!r}")
    scale = float(cfg.get("scale", 1.0))
    if "n_mean" in cfg and cfg["n_mean"] is not None:
        return make_ps_qam_for_mean(order, float(cfg["n_mean"]), scale)
    return make_ps_qam(order, float(cfg.get("nu", 0.0)), scale)
