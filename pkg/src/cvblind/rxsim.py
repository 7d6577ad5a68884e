"""Polarization-diverse balanced receiver with a clipping ADC.

Each arm sums differential voltages from electronic noise, LO shot noise,
ASE-LO beat noise and the differential blinding intensity, then applies the
analog low-pass, the AC-coupling high-pass, an optional TIA limiter, and the
ADC.  The 1344 nm blinding light is ~29 THz away from the 1550 nm LO, so no
blinding-LO beat term falls inside the detector bandwidth and none is modelled.
"""
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import fft, signal

from ._validation import check_trace
from .blindwave import BlindWaveform, square_wave
from .calibration import receiver_fixture

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0
LO_WAVELENGTH = 1550e-9
PHOTON_ENERGY = PLANCK * LIGHT_SPEED / LO_WAVELENGTH

MIN_SAMPLES = 2 ** 16
MODES = ("thermal", "shot", "noisy")
# EDFA ASE spans roughly 35 nm around 1550 nm
ASE_OPTICAL_BANDWIDTH = LIGHT_SPEED * 35e-9 / LO_WAVELENGTH ** 2

_TRACE_MAGIC = b"CVTR"
_TRACE_VERSION = 1
_WARMUP_TIME_CONSTANTS = 10
_TAIL_PAD = 1024

_FIXTURE = receiver_fixture()


def dbm_to_watts(dbm):
    if dbm is None or dbm == -np.inf:
        return 0.0
    return 1e-3 * 10.0 ** (dbm / 10.0)


def watts_to_dbm(watts):
    return -np.inf if watts <= 0 else 10.0 * np.log10(watts / 1e-3)


@dataclass(frozen=True)
class DetectorChainConfig:
    analog_bandwidth: float = 1.6e9
    ac_cutoff: float = 3.0e5
    eta: float = 0.90
    gain: float = _FIXTURE["detector"]["gain"]  # V per W of differential optical power
    thermal_noise_density: float = _FIXTURE["detector"]["thermal_noise_density"]  # V^2/Hz
    lo_power: float = _FIXTURE["detector"]["lo_power"]  # W per balanced detector
    lowpass_order: int = 4
    highpass_order: int = 1
    tia_limit: float = None  # volts; None disables the pre-ADC limiter

    def __post_init__(self):
        for name in ("analog_bandwidth", "ac_cutoff", "eta", "gain", "thermal_noise_density", "lo_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.ac_cutoff >= self.analog_bandwidth:
            raise ValueError("ac_cutoff must be below analog_bandwidth")
        if self.eta > 1:
            raise ValueError("eta must be <= 1")


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 12
    full_scale_code: int = 2048
    sample_rate: float = 3.2e9
    v_fullscale: float = _FIXTURE["adc"]["v_fullscale"]

    def __post_init__(self):
        if self.full_scale_code != 2 ** (self.bits - 1):
            raise ValueError("full_scale_code must equal 2**(bits-1)")
        if not (self.sample_rate > 0 and self.v_fullscale > 0):
            raise ValueError("sample_rate and v_fullscale must be positive")


@dataclass(frozen=True)
class AttackSourceConfig:
    ase_power_dbm: float = None
    blind_power_dbm: float = None
    blind_waveform: BlindWaveform = field(default=None, compare=False)
    bs_imbalance_r: float = _FIXTURE["attack"]["bs_imbalance_r"]
    pol_mismatch_phi: float = 0.0
    blind_responsivity: float = _FIXTURE["attack"]["blind_responsivity"]
    ase_coupling: float = _FIXTURE["attack"]["ase_coupling"]
    ase_optical_bandwidth: float = ASE_OPTICAL_BANDWIDTH
    blind_all_modes: bool = False

    def __post_init__(self):
        if not 0.5 < self.bs_imbalance_r <= 1.0:
            raise ValueError("bs_imbalance_r must lie in (0.5, 1]")
        if not (self.blind_responsivity > 0 and self.ase_coupling > 0 and self.ase_optical_bandwidth > 0):
            raise ValueError("responsivity, coupling and optical bandwidth must be positive")

    @property
    def waveform(self):
        return self.blind_waveform if self.blind_waveform is not None else square_wave()


@dataclass(frozen=True, eq=False)
class WaveformPair:
    h: np.ndarray
    v: np.ndarray
    sample_rate: float = 3.2e9
    mode: str = None
    seed: int = None
    config_hash: str = None

    def __post_init__(self):
        h = check_trace(self.h, name="h", allow_complex=False)
        v = check_trace(self.v, name="v", allow_complex=False)
        if h.shape != v.shape:
            raise ValueError("h and v must have equal lengths")
        h.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "v", v)

    def __len__(self):
        return self.h.size


# ---------------------------------------------------------------- primitives


def saturate(v, v_ll, v_ul):
    """Clamp to ``[v_ll, v_ul]``; the receiver is non-injective outside."""
    if not v_ll < v_ul:
        raise ValueError(f"lower limit {v_ll} must be below upper limit {v_ul}")
    out = np.clip(v, v_ll, v_ul)
    return float(out) if np.ndim(out) == 0 else out


def _complex_gaussian(power_w, n, rng, bandwidth=None, rate=None):
    if power_w <= 0:
        return np.zeros(n, dtype=np.complex128)
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if bandwidth is not None and rate is not None and bandwidth < rate:
        spec = fft.fft(z)
        spec[np.abs(fft.fftfreq(n, d=1.0 / rate)) > bandwidth / 2.0] = 0.0
        z = fft.ifft(spec)
        return z * np.sqrt(power_w / (2.0 * bandwidth / rate))
    return z * np.sqrt(power_w / 2.0)


def ase_noise_field(power_dbm, bandwidth, n, seed=None, rate=3.2e9):
    """Circular complex Gaussian field with mean power ``power_dbm`` in ``bandwidth``.

    ``bandwidth`` is two-sided (optical) and is clipped to the sample rate.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    return _complex_gaussian(dbm_to_watts(power_dbm), n, rng, bandwidth=min(bandwidth, rate), rate=rate)


def _highpass_coeffs(cutoff, rate, order):
    return signal.butter(order, cutoff, btype="highpass", fs=rate)


def ac_couple(trace, cutoff, rate=3.2e9, order=1, initial="rest"):
    """First-order (by default) high-pass modelling the detector's DC block.

    ``initial="rest"`` starts from zero state, so a step input decays with the
    filter time constant; ``"steady"`` assumes the first sample has been
    applied forever.
    """
    if not 0 < cutoff < rate / 2:
        raise ValueError("cutoff must lie below Nyquist")
    x = np.asarray(trace, dtype=float)
    b, a = _highpass_coeffs(cutoff, rate, order)
    if initial == "rest":
        return signal.lfilter(b, a, x)
    if initial == "steady":
        zi = signal.lfilter_zi(b, a) * x[0]
        return signal.lfilter(b, a, x, zi=zi)[0]
    raise ValueError(f"unknown initial condition {initial!r}")


def lowpass_response(freqs, bandwidth, order=4):
    """Complex response of an analog Butterworth low-pass at ``freqs`` (Hz)."""
    b, a = signal.butter(order, 2 * np.pi * bandwidth, btype="low", analog=True)
    _, h = signal.freqs(b, a, worN=2 * np.pi * np.asarray(freqs, dtype=float))
    return h


@lru_cache(maxsize=8)
def _lowpass_grid(n, rate, bandwidth, order):
    h = lowpass_response(fft.rfftfreq(n, d=1.0 / rate), bandwidth, order)
    h.flags.writeable = False
    return h


def analog_lowpass(trace, bandwidth, rate=3.2e9, order=4):
    x = np.asarray(trace, dtype=float)
    n = fft.next_fast_len(x.size, real=True)
    spec = fft.rfft(x, n)
    spec *= _lowpass_grid(n, float(rate), float(bandwidth), int(order))
    return fft.irfft(spec, n)[: x.size]


def adc_quantize(trace, adc=None, v_fullscale=None):
    """``round(v / v_fs * 2048)`` clamped to ``[-2048, 2048]`` as int16 codes."""
    adc = adc or AdcConfig()
    v_fs = adc.v_fullscale if v_fullscale is None else v_fullscale
    if not v_fs > 0:
        raise ValueError("v_fullscale must be positive")
    fs_code = adc.full_scale_code
    codes = np.rint(np.asarray(trace, dtype=float) / v_fs * fs_code)
    return saturate(codes, -fs_code, fs_code).astype(np.int16)


def arm_shares(pol_mismatch_phi):
    """Fraction of the blinding power reaching the H and V receivers."""
    theta = np.pi / 4 + pol_mismatch_phi
    return np.cos(theta) ** 2, np.sin(theta) ** 2


def inject_blinding(n, atk, det, offset=0):
    """Differential blinding voltage on each arm, shape ``(2, n)``.

    The blinding power is the average optical power an optical power meter
    would read, so the waveform is normalized to unit mean intensity.  The
    splitter sends a fraction ``r`` to the "+" photodiode, giving a net
    differential power ``(2r-1) P(t)``.
    """
    power = dbm_to_watts(atk.blind_power_dbm)
    out = np.zeros((2, n))
    if power <= 0 or atk.bs_imbalance_r == 0.5:
        return out
    wave = atk.waveform
    intensity = np.abs(wave.tiled(n, offset)) ** 2 / np.mean(wave.intensity)
    scale = (2 * atk.bs_imbalance_r - 1) * det.gain * atk.blind_responsivity * power
    share_h, share_v = arm_shares(atk.pol_mismatch_phi)
    out[0] = scale * share_h * intensity
    out[1] = scale * share_v * intensity
    return out


# ---------------------------------------------------------------- acquisition


def shot_noise_variance(det, rate):
    """Shot-noise voltage variance over the full simulated band ``[0, rate/2]``."""
    return det.gain ** 2 * PHOTON_ENERGY * det.lo_power * rate / det.eta


def thermal_noise_variance(det, rate):
    return det.thermal_noise_density * rate / 2.0


def ase_inband_power(atk, rate):
    """ASE power per polarization arm inside the simulated optical band."""
    total = dbm_to_watts(atk.ase_power_dbm) * atk.ase_coupling
    return 0.5 * total * min(1.0, rate / atk.ase_optical_bandwidth)


def config_hash(det, adc, atk):
    payload = {"det": asdict(det), "adc": asdict(adc)}
    atk_dict = {k: v for k, v in asdict(atk).items() if k != "blind_waveform"}
    if atk.blind_waveform is not None:
        atk_dict["blind_waveform"] = hashlib.sha256(atk.blind_waveform.envelope.tobytes()).hexdigest()
    payload["atk"] = atk_dict
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _stream_seeds(seed):
    # fixed component order keeps each noise source's stream independent of mode
    names = ("thermal_h", "thermal_v", "shot_h", "shot_v", "ase_h", "ase_v")
    return dict(zip(names, np.random.SeedSequence(seed).spawn(len(names))))


def simulate_acquisition(mode, det=None, adc=None, atk=None, duration_s=None, seed=0, n_samples=None):
    """Sampled ADC codes of both arms for one acquisition mode.

    ``thermal``: electronic noise only.  ``shot``: plus LO shot noise.
    ``noisy``: plus ASE beat noise and blinding when configured.  Blinding
    enters the other modes only when ``atk.blind_all_modes`` is set.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    det = det or DetectorChainConfig()
    adc = adc or AdcConfig()
    atk = atk or AttackSourceConfig()
    rate = adc.sample_rate
    if n_samples is None:
        if duration_s is None:
            raise ValueError("give duration_s or n_samples")
        n_samples = int(round(duration_s * rate))
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"acquisition needs at least {MIN_SAMPLES} samples, got {n_samples}")

    tau_samples = rate / (2 * np.pi * det.ac_cutoff)
    n_warm = int(np.ceil(_WARMUP_TIME_CONSTANTS * tau_samples))
    n_total = n_warm + n_samples + _TAIL_PAD
    seeds = _stream_seeds(seed)

    sigma_th = np.sqrt(thermal_noise_variance(det, rate))
    sigma_shot = np.sqrt(shot_noise_variance(det, rate))
    volts = np.empty((2, n_total))
    for arm, tag in enumerate("hv"):
        volts[arm] = sigma_th * np.random.default_rng(seeds[f"thermal_{tag}"]).standard_normal(n_total)
        if mode != "thermal":
            volts[arm] += sigma_shot * np.random.default_rng(seeds[f"shot_{tag}"]).standard_normal(n_total)
        if mode == "noisy" and atk.ase_power_dbm is not None:
            field_ = _complex_gaussian(ase_inband_power(atk, rate), n_total,
                                       np.random.default_rng(seeds[f"ase_{tag}"]))
            # balanced detection of the LO beat: 2 sqrt(P_LO) Re(E_ase)
            volts[arm] += det.gain * 2.0 * np.sqrt(det.lo_power) * field_.real
    if atk.blind_power_dbm is not None and (mode == "noisy" or atk.blind_all_modes):
        volts += inject_blinding(n_total, atk, det, offset=-n_warm)

    codes = np.empty((2, n_samples), dtype=np.int16)
    for arm in range(2):
        x = analog_lowpass(volts[arm], det.analog_bandwidth, rate, det.lowpass_order)
        if det.tia_limit is not None:
            x = saturate(x, -det.tia_limit, det.tia_limit)
        x = ac_couple(x, det.ac_cutoff, rate, det.highpass_order, initial="steady")
        codes[arm] = adc_quantize(x[n_warm:n_warm + n_samples], adc)
    return WaveformPair(codes[0], codes[1], rate, mode=mode, seed=seed,
                        config_hash=config_hash(det, adc, atk))


# ---------------------------------------------------------------- trace files


def write_trace(pair, path):
    """Binary dump: magic, u32 header length, JSON header, int16 LE codes (h then v)."""
    header = json.dumps({
        "version": _TRACE_VERSION,
        "sample_rate": pair.sample_rate,
        "mode": pair.mode,
        "seed": pair.seed,
        "config_hash": pair.config_hash,
        "n_samples": len(pair),
    }).encode()
    with open(path, "wb") as fh:
        fh.write(_TRACE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.rint(pair.h).astype("<i2").tobytes())
        fh.write(np.rint(pair.v).astype("<i2").tobytes())


def read_trace(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _TRACE_MAGIC:
            raise ValueError(f"{path} is not a trace file")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length))
        data = np.frombuffer(fh.read(), dtype="<i2")
    n = header["n_samples"]
    if data.size != 2 * n:
        raise ValueError(f"expected {2 * n} codes, found {data.size}")
    return WaveformPair(data[:n].astype(np.int16), data[n:].astype(np.int16), header["sample_rate"],
                        mode=header["mode"], seed=header["seed"], config_hash=header["config_hash"])
