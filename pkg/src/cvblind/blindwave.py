"""Modulation envelopes for the blinding laser.

A :class:`BlindWaveform` holds exactly one period of a complex optical-field
envelope with unit peak magnitude.  The absolute optical power is applied
later by the receiver simulation.
"""
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ResolutionError

DEFAULT_NOTCH_BAND = (2.1e8, 7.5e8)
SUPPRESSION_FLOOR_DB = -120.0

_ENVELOPE_MAGIC = b"CVBW"
_ENVELOPE_VERSION = 1


@dataclass(frozen=True, eq=False)
class BlindWaveform:
    envelope: np.ndarray
    rate: float

    def __post_init__(self):
        env = np.array(self.envelope, dtype=np.complex128).ravel()
        if env.size < 2 or not np.all(np.isfinite(env)):
            raise ValueError("envelope needs at least two finite samples")
        peak = np.max(np.abs(env))
        if peak == 0:
            raise ValueError("envelope is identically zero")
        if abs(peak - 1.0) > 1e-9:
            raise ValueError(f"envelope peak magnitude must be 1, got {peak}")
        env.flags.writeable = False
        object.__setattr__(self, "envelope", env)
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def period_s(self):
        return self.envelope.size / self.rate

    @property
    def intensity(self):
        return np.abs(self.envelope) ** 2

    def tiled(self, n, offset=0):
        """``n`` samples of the periodic envelope starting at sample ``offset``."""
        idx = (np.arange(n) + offset) % self.envelope.size
        return self.envelope[idx]

    def spectrum(self):
        """Per-harmonic complex amplitudes and their frequencies (two-sided)."""
        coeffs = np.fft.fft(self.envelope) / self.envelope.size
        freqs = np.fft.fftfreq(self.envelope.size, d=1.0 / self.rate)
        return freqs, coeffs


def _period_samples(freq, rate):
    if freq <= 0 or rate <= 0:
        raise ResolutionError("frequency and rate must be positive")
    if freq > rate / 20.0:
        raise ResolutionError(
            f"{freq:g} Hz is above a tenth of Nyquist for rate {rate:g} S/s; waveform under-resolved")
    n = int(round(rate / freq))
    if abs(n * freq - rate) > 1e-6 * rate:
        raise ResolutionError(f"rate/freq = {rate / freq:g} is not an integer number of samples")
    return n


def square_wave(freq=1.0e7, rate=3.2e9, duty=0.5):
    """Two-level {0, 1} envelope; ``duty=1`` gives the constant (naive) envelope."""
    if not 0.0 < duty <= 1.0:
        raise ValueError("duty must lie in (0, 1]")
    n = _period_samples(freq, rate)
    high = int(round(duty * n))
    if high == 0:
        raise ResolutionError("duty cycle shorter than one sample")
    env = np.zeros(n)
    env[:high] = 1.0
    return BlindWaveform(env, rate)


def _band_mask(freqs, band):
    lo, hi = band
    return (np.abs(freqs) >= lo) & (np.abs(freqs) <= hi)


def notch_filter(w, band=DEFAULT_NOTCH_BAND):
    """Zero every harmonic with ``|f|`` inside ``band`` over one period.

    The filtering is cyclic, so the result stays periodic.  A two-level
    envelope comes out bipolar; the sign flips are what require a phase
    modulator next to the amplitude modulator.
    """
    lo, hi = band
    if not 0 <= lo < hi or hi > w.rate / 2:
        raise ValueError(f"band {band} must satisfy 0 <= lo < hi <= Nyquist")
    spec = np.fft.fft(w.envelope)
    freqs = np.fft.fftfreq(w.envelope.size, d=1.0 / w.rate)
    mask = _band_mask(freqs, band)
    if not np.any(np.abs(spec[mask]) > 1e-12 * np.abs(spec).max()):
        return w
    spec[mask] = 0.0
    env = np.fft.ifft(spec)
    return BlindWaveform(env / np.max(np.abs(env)), w.rate)


def phase_excursion(w, floor=1e-6):
    """Largest phase departure (rad) from the phase of the envelope peak.

    Zero for anything a pure amplitude modulator can produce; ``pi`` for a
    real envelope that changes sign.  Samples below ``floor`` are ignored.
    """
    env = w.envelope
    ref = env[np.argmax(np.abs(env))]
    live = env[np.abs(env) > floor]
    return float(np.max(np.abs(np.angle(live * np.conj(ref)))))


def band_power(w, band):
    freqs, coeffs = w.spectrum()
    return float(np.sum(np.abs(coeffs[_band_mask(freqs, band)]) ** 2))


def verify_notch(w, band=DEFAULT_NOTCH_BAND, reference=None):
    """In-band power of ``w`` relative to the plain square wave, in dB.

    ``reference`` defaults to the 50 % square wave with the same period and
    sample rate.  Empty bands are reported at ``SUPPRESSION_FLOOR_DB``.
    """
    if reference is None:
        reference = square_wave(1.0 / w.period_s, w.rate)
    ref = band_power(reference, band)
    got = band_power(w, band)
    if ref <= 0:
        return SUPPRESSION_FLOOR_DB
    if got <= 0:
        return SUPPRESSION_FLOOR_DB
    return float(max(10.0 * np.log10(got / ref), SUPPRESSION_FLOOR_DB))


def write_csv(w, path):
    t = np.arange(w.envelope.size) / w.rate
    data = np.column_stack([t, w.envelope.real, w.envelope.imag])
    np.savetxt(path, data, delimiter=",", header="time_s,re,im", comments="", fmt="%.12g")


def write_envelope(w, path):
    """Binary envelope: magic, u32 header length, JSON header, complex128 little-endian."""
    header = json.dumps({"version": _ENVELOPE_VERSION, "rate": w.rate,
                         "n_samples": int(w.envelope.size)}).encode()
    with open(path, "wb") as fh:
        fh.write(_ENVELOPE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(w.envelope.astype("<c16").tobytes())


def read_envelope(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _ENVELOPE_MAGIC:
            raise ValueError(f"{path} is not a blinding-envelope file")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length))
        env = np.frombuffer(fh.read(), dtype="<c16")
    if env.size != header["n_samples"]:
        raise ValueError("truncated envelope file")
    return BlindWaveform(env.astype(np.complex128), header["rate"])
