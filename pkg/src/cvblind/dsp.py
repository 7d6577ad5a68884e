"""Reduced receiver DSP, shot-noise calibration and blinding watchdogs.

Chain per acquisition: downconvert each arm around 400 MHz, root-raised-cosine
filter, combine the two polarization arms, take the variance.  The estimator
classes follow the scikit-learn conventions (``fit`` returns ``self``,
learned state ends in ``_``, constructor arguments are hyper-parameters).
"""
from dataclasses import dataclass

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_same_length, check_trace
from .errors import CalibrationError, DegenerateInputError

CLIP_ALARM_FRACTION = 1e-4
OOB_ALARM_MARGIN_DB = 6.0
DEFAULT_SIGNAL_BAND = (2.5e8, 5.5e8)


@dataclass(frozen=True)
class DspConfig:
    downconvert_hz: float = 4.0e8
    rrc_rolloff: float = 0.95
    symbol_rate: float = 1.536e8
    rrc_span_symbols: int = 32
    sample_rate: float = 3.2e9
    pol_phase: float = None  # fixed relative phase for the V arm; None maximizes variance

    def __post_init__(self):
        if not 0 < self.rrc_rolloff <= 1:
            raise ValueError("rrc_rolloff must lie in (0, 1]")
        if not 0 < self.symbol_rate < self.sample_rate:
            raise ValueError("symbol_rate must be positive and below sample_rate")
        if self.rrc_span_symbols < 8:
            raise ValueError("RRC span must cover at least 8 symbols")
        if not 0 <= self.downconvert_hz < self.sample_rate / 2:
            raise ValueError("downconversion frequency must lie below Nyquist")

    @property
    def signal_band(self):
        half = 0.5 * (1 + self.rrc_rolloff) * self.symbol_rate
        return (self.downconvert_hz - half, self.downconvert_hz + half)


@dataclass(frozen=True)
class VarianceReport:
    var_thermal: float
    var_shot: float
    var_noisy: float
    snu: float
    eps_th: float
    sigma2: float
    eps_est: float


@dataclass(frozen=True)
class WatchdogReport:
    out_of_band_power_db: float = None
    clip_fraction: float = None
    oob_alarm: bool = False
    clip_alarm: bool = False

    @property
    def alarm(self):
        return self.oob_alarm or self.clip_alarm


# ---------------------------------------------------------------- chain steps


def frequency_recover(trace, f, rate):
    """Multiply by ``exp(-2j pi f t)`` with ``t = k / rate``."""
    if not 0 <= f < rate / 2:
        raise ValueError("downconversion frequency must lie below Nyquist")
    x = check_trace(trace, min_length=1)
    return x * _mixer(x.size, float(f), float(rate))


def _mixer(n, f, rate):
    # exact tiling when f/rate has a short period (400 MHz at 3.2 GS/s repeats every 8 samples)
    ratio = f / rate
    for period in range(1, 1025):
        if abs(ratio * period - round(ratio * period)) < 1e-12:
            cycle = np.exp(-2j * np.pi * ratio * np.arange(period))
            return np.tile(cycle, n // period + 1)[:n]
    return np.exp(-2j * np.pi * ratio * np.arange(n))


def rrc_taps(rolloff, symbol_rate, rate, span_symbols=32):
    """Unit-energy root-raised-cosine taps with an odd tap count."""
    sps = rate / symbol_rate
    half = int(np.ceil(span_symbols * sps / 2))
    t = np.arange(-half, half + 1) / sps  # in symbol periods
    beta = rolloff
    taps = np.empty_like(t)
    at_zero = np.isclose(t, 0.0)
    at_sing = np.isclose(np.abs(t), 1.0 / (4 * beta)) if beta > 0 else np.zeros_like(t, bool)
    regular = ~(at_zero | at_sing)
    tr = t[regular]
    taps[regular] = (np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))) / (
        np.pi * tr * (1 - (4 * beta * tr) ** 2))
    taps[at_zero] = 1 - beta + 4 * beta / np.pi
    taps[at_sing] = beta / np.sqrt(2) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
    return taps / np.sqrt(np.sum(taps ** 2))


def rrc_filter(trace, cfg=None, mode="same"):
    cfg = cfg or DspConfig()
    x = check_trace(trace, min_length=1)
    taps = rrc_taps(cfg.rrc_rolloff, cfg.symbol_rate, cfg.sample_rate, cfg.rrc_span_symbols)
    return signal.oaconvolve(x, taps, mode=mode)


def best_pol_phase(h, v):
    """Relative phase of ``v`` that maximizes ``Var[(h + e^{i phi} v)/sqrt(2)]``."""
    h = h - h.mean()
    v = v - v.mean()
    return float(-np.angle(np.vdot(v, h).conj()))


def combine_polarizations(h, v, phase=None):
    """``(h + e^{i phi} v) / sqrt(2)``; ``phi`` maximizes the variance unless given."""
    h = check_trace(h, name="h")
    v = check_trace(v, name="v")
    check_same_length(h, v, names=("h", "v"))
    if phase is None:
        phase = best_pol_phase(h, v)
    return (h + np.exp(1j * phase) * v) / np.sqrt(2.0)


def variance(trace):
    """Mean-removed second moment; for complex input both quadratures add."""
    x = check_trace(trace)
    return float(np.mean(np.abs(x - x.mean()) ** 2))


def process_pair(pair, cfg=None):
    """Steps 1-3 of the chain; returns the combined complex baseband trace.

    Filter edges (half the RRC length on each side) are dropped.
    """
    cfg = cfg or DspConfig()
    arms = []
    for arm in (pair.h, pair.v):
        base = frequency_recover(arm, cfg.downconvert_hz, cfg.sample_rate)
        arms.append(rrc_filter(base, cfg, mode="valid"))
    return combine_polarizations(arms[0], arms[1], cfg.pol_phase)


def pair_variance(pair, cfg=None):
    return variance(process_pair(pair, cfg))


# ---------------------------------------------------------------- estimators


class PolarizationCombiner(TransformerMixin, BaseEstimator):
    """Learns the relative phase between the H and V arms, then combines them.

    ``X`` is an ``(n_samples, 2)`` complex array with H in column 0.
    """

    def __init__(self, phase=None):
        self.phase = phase

    def fit(self, X, y=None):
        X = _two_columns(X)
        self.phase_ = self.phase if self.phase is not None else best_pol_phase(X[:, 0], X[:, 1])
        return self

    def transform(self, X):
        check_is_fitted(self, "phase_")
        X = _two_columns(X)
        return (X[:, 0] + np.exp(1j * self.phase_) * X[:, 1]) / np.sqrt(2.0)


def _two_columns(X):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 2 or X.shape[0] < 2:
        raise ValueError(f"expected an (n_samples, 2) array, got shape {X.shape}")
    return X.astype(np.complex128, copy=False)


class ExcessNoiseEstimator(BaseEstimator):
    """Shot-noise-unit calibration and excess-noise estimation.

    ``fit(thermal, shot)`` measures the shot-noise unit from two reference
    acquisitions; ``predict(noisy)`` returns the excess-noise estimate for
    the assumed transmission and receiver efficiency.  Negative estimates
    are returned as-is.
    """

    def __init__(self, dsp=None, t_assumed=0.5, eta=0.90):
        self.dsp = dsp
        self.t_assumed = t_assumed
        self.eta = eta

    def fit(self, thermal, shot):
        cfg = self.dsp or DspConfig()
        self.var_thermal_ = pair_variance(thermal, cfg)
        self.var_shot_ = pair_variance(shot, cfg)
        self.snu_ = self.var_shot_ - self.var_thermal_
        if not self.snu_ > 0:
            raise CalibrationError(
                f"Var[shot]={self.var_shot_:.6g} <= Var[thermal]={self.var_thermal_:.6g}; "
                "shot-noise reference is dead or blinded")
        self.eps_th_ = self.var_thermal_ / self.snu_
        return self

    def estimate_from_variance(self, var_noisy):
        check_is_fitted(self, "snu_")
        sigma2 = var_noisy / self.snu_
        eps_est = (sigma2 - 1.0 - self.eps_th_) / (self.eta * self.t_assumed)
        return sigma2, eps_est

    def report(self, noisy):
        var_noisy = pair_variance(noisy, self.dsp or DspConfig())
        sigma2, eps_est = self.estimate_from_variance(var_noisy)
        return VarianceReport(self.var_thermal_, self.var_shot_, var_noisy, self.snu_,
                              self.eps_th_, sigma2, eps_est)

    def predict(self, noisy):
        return self.report(noisy).eps_est


def calibrate_and_estimate(thermal, shot, noisy, cfg=None, t_assumed=0.5, eta=0.90):
    est = ExcessNoiseEstimator(cfg, t_assumed, eta).fit(thermal, shot)
    return est.report(noisy)


class LinearModelEstimator(BaseEstimator):
    """Fits ``b = t a + z`` between Alice's and Bob's SNU-scaled symbols.

    ``normalization="energy"`` divides the correlation by ``sum |a|^2`` so the
    slope estimates ``t = sqrt(eta T)`` directly, and the transmission is
    ``t^2 / eta`` (the per-sample form ``t^2 / (2<n> eta)`` applied to the slope per
    unit-power symbol).  ``normalization="N"`` uses the literal per-sample
    average and ``t^2 / (2<n> eta)``, which is only consistent when ``a`` has
    unit power.
    """

    def __init__(self, n_mean=None, eta=0.90, eps_th=0.0, normalization="energy"):
        self.n_mean = n_mean
        self.eta = eta
        self.eps_th = eps_th
        self.normalization = normalization

    def fit(self, a, b):
        a = check_trace(a, name="a")
        b = check_trace(b, name="b")
        check_same_length(a, b, names=("a", "b"))
        energy = float(np.sum(np.abs(a) ** 2))
        if energy <= 0:
            raise DegenerateInputError("Alice's symbols have zero energy")
        n = a.size
        corr = float(np.real(np.sum(a * np.conj(b))))
        n_mean = self.n_mean if self.n_mean is not None else energy / n / 2.0
        if self.normalization == "energy":
            self.t_ = corr / energy
            self.transmission_ = self.t_ ** 2 / self.eta
        elif self.normalization == "N":
            self.t_ = corr / n
            self.transmission_ = self.t_ ** 2 / (2.0 * n_mean * self.eta)
        else:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        self.sigma2_ = float(np.sum(np.abs(b - self.t_ * a) ** 2) / n)
        if self.transmission_ > 0:
            self.excess_noise_ = (self.sigma2_ - 1.0 - self.eps_th) / (self.eta * self.transmission_)
        else:
            self.excess_noise_ = np.nan
        return self

    def predict(self, a):
        check_is_fitted(self, "t_")
        return self.t_ * check_trace(a, name="a")


def linear_model_estimate(a, b, n_mean=None, eta=0.90, eps_th=0.0, normalization="energy"):
    """Return ``(t, sigma2, T, eps)`` estimates."""
    m = LinearModelEstimator(n_mean, eta, eps_th, normalization).fit(a, b)
    return m.t_, m.sigma2_, m.transmission_, m.excess_noise_


# ---------------------------------------------------------------- watchdogs


def out_of_band_ratio_db(pair, signal_band=DEFAULT_SIGNAL_BAND, nperseg=4096):
    """Spectral power outside ``signal_band`` relative to inside, both arms pooled."""
    rate = pair.sample_rate
    lo, hi = signal_band
    if not 0 <= lo < hi <= rate / 2:
        raise ValueError("signal band must lie within Nyquist")
    nperseg = min(nperseg, len(pair))
    total = 0.0
    inside = 0.0
    for arm in (pair.h, pair.v):
        freqs, psd = signal.welch(arm, fs=rate, nperseg=nperseg, detrend="constant")
        mask = (freqs >= lo) & (freqs <= hi)
        inside += psd[mask].sum()
        total += psd.sum()
    outside = total - inside
    if inside <= 0:
        return np.inf
    return float(10.0 * np.log10(outside / inside))


def watchdog_out_of_band(pair, signal_band=DEFAULT_SIGNAL_BAND, baseline_db=None,
                         margin_db=OOB_ALARM_MARGIN_DB):
    if baseline_db is None:
        from .calibration import receiver_fixture
        baseline_db = receiver_fixture()["watchdog"]["oob_baseline_db"]
    ratio = out_of_band_ratio_db(pair, signal_band)
    return WatchdogReport(out_of_band_power_db=ratio, oob_alarm=bool(ratio > baseline_db + margin_db))


def watchdog_clipping(pair, full_scale_code=2048, alarm_fraction=CLIP_ALARM_FRACTION):
    clipped = np.count_nonzero(np.abs(pair.h) >= full_scale_code) + np.count_nonzero(
        np.abs(pair.v) >= full_scale_code)
    fraction = clipped / (2 * len(pair))
    return WatchdogReport(clip_fraction=float(fraction), clip_alarm=bool(fraction > alarm_fraction))


class BlindingWatchdog(BaseEstimator):
    """Both monitors, with the out-of-band baseline learned from clean acquisitions."""

    def __init__(self, signal_band=DEFAULT_SIGNAL_BAND, margin_db=OOB_ALARM_MARGIN_DB,
                 alarm_fraction=CLIP_ALARM_FRACTION, full_scale_code=2048):
        self.signal_band = signal_band
        self.margin_db = margin_db
        self.alarm_fraction = alarm_fraction
        self.full_scale_code = full_scale_code

    def fit(self, pairs):
        pairs = list(pairs)
        if not pairs:
            raise ValueError("need at least one blinding-free acquisition")
        self.baseline_db_ = float(np.mean([out_of_band_ratio_db(p, self.signal_band) for p in pairs]))
        return self

    def inspect(self, pair):
        check_is_fitted(self, "baseline_db_")
        oob = watchdog_out_of_band(pair, self.signal_band, self.baseline_db_, self.margin_db)
        clip = watchdog_clipping(pair, self.full_scale_code, self.alarm_fraction)
        return WatchdogReport(oob.out_of_band_power_db, clip.clip_fraction, oob.oob_alarm, clip.clip_alarm)

    def predict(self, pairs):
        return np.array([self.inspect(p).alarm for p in pairs])
