"""End-to-end experiments: noise-source characterization, the blinding sweep,
hiding-threshold extraction and report emission.

Seeding uses common random numbers.  Every acquisition of repeat ``r`` draws
its noise from ``derive_seed(master, r)``, whatever its grid point or mode.
Neighbouring grid points therefore differ only through the swept parameter,
which keeps the curves smooth, and a ``noisy`` acquisition with nothing
injected reproduces the ``shot`` reference sample for sample.
"""
import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .blindwave import DEFAULT_NOTCH_BAND, notch_filter, square_wave
from .dsp import DspConfig, ExcessNoiseEstimator, pair_variance, watchdog_clipping, watchdog_out_of_band
from .errors import EmptyInputError
from .rxsim import MIN_SAMPLES, AttackSourceConfig, simulate_acquisition

CSV_SCHEMA = "cvblind-sweep/1"
CURVE_SCHEMA = "cvblind-noise-curve/1"

DEFAULT_BLIND_GRID = (-15.64536, -15.5, -15.0, -14.5) + tuple(
    round(-14.0 + 0.1 * k, 1) for k in range(15)) + (-12.53858,)
DEFAULT_NOISE_LEVELS = (-31.8, -30.8, -29.9, -28.3, -27.0)
# -51.25 dBm floor to -13.6 dBm, finer steps toward the top
DEFAULT_CHARACTERIZATION_GRID = (-51.25, -48.0, -45.0, -42.0, -40.0, -38.0, -36.0, -34.0, -32.0,
                                 -30.0, -28.0, -26.0, -24.0, -22.0, -20.0, -18.0, -16.0, -13.6)


def derive_seed(master, *counters):
    """Deterministic 32-bit seed for ``(master, counters...)``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(c) for c in counters))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class SweepConfig:
    blind_powers_dbm: tuple = DEFAULT_BLIND_GRID
    noise_powers_dbm: tuple = DEFAULT_NOISE_LEVELS
    samples_per_point: int = 2 ** 20
    seed: int = 0
    threshold_snu: float = 0.126
    t_assumed: float = 0.5
    eta: float = 0.90
    # "per_point" re-acquires the references at every grid point, "per_sweep" once
    calibration: str = "per_point"
    blind_all_modes: bool = False
    waveform: str = "square"  # or "notched"
    blind_freq: float = 1.0e7
    notch_band: tuple = DEFAULT_NOTCH_BAND
    pol_phase: float = math.pi
    pol_mismatch_phi: float = 0.0

    def __post_init__(self):
        for name in ("blind_powers_dbm", "noise_powers_dbm"):
            grid = tuple(float(p) for p in getattr(self, name))
            if not grid:
                raise ValueError(f"{name} must not be empty")
            if list(grid) != sorted(grid):
                raise ValueError(f"{name} must be sorted ascending")
            object.__setattr__(self, name, grid)
        object.__setattr__(self, "notch_band", tuple(self.notch_band))
        if self.samples_per_point < MIN_SAMPLES:
            raise ValueError(f"samples_per_point must be at least {MIN_SAMPLES}")
        if self.calibration not in ("per_point", "per_sweep"):
            raise ValueError("calibration must be 'per_point' or 'per_sweep'")
        if self.waveform not in ("square", "notched"):
            raise ValueError("waveform must be 'square' or 'notched'")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def blind_waveform(self):
        w = square_wave(self.blind_freq)
        return notch_filter(w, self.notch_band) if self.waveform == "notched" else w

    def dsp(self):
        return DspConfig(pol_phase=self.pol_phase)


@dataclass(frozen=True)
class SweepRecord:
    noise_power_dbm: float
    blind_power_dbm: float
    snu: float
    eps_th: float
    eps_est: float
    clip_fraction: float
    oob_alarm: bool
    seed: int
    clip_alarm: bool = False
    error: str = ""

    @property
    def any_alarm(self):
        return bool(self.oob_alarm or self.clip_alarm)


@dataclass(frozen=True)
class NoiseCurve:
    powers_dbm: np.ndarray
    eps: np.ndarray  # shape (repeats, len(powers))
    seeds: tuple

    @property
    def mean(self):
        return self.eps.mean(axis=0)

    @property
    def spread(self):
        """Peak-to-peak spread across repeats relative to the mean, per power."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.ptp(self.eps, axis=0) / np.abs(self.mean)


@dataclass(frozen=True)
class HidingThreshold:
    noise_power_dbm: float
    power_dbm: float = None  # None: the sweep never crosses the threshold
    bracket: tuple = None

    @property
    def crossed(self):
        return self.power_dbm is not None


class _Calibrator:
    """Calibration references, cached by acquisition seed and attack settings.

    With common random numbers the per-point references are identical from
    point to point unless blinding reaches them, so per-point refresh only
    costs extra work when ``blind_all_modes`` is set.  ``per_sweep`` takes
    blinding-free references once.
    """

    def __init__(self, det, adc, dsp, t_assumed, eta, n, per_sweep=False):
        self.det, self.adc, self.dsp, self.n = det, adc, dsp, n
        self.t_assumed, self.eta = t_assumed, eta
        self.per_sweep = per_sweep
        self._cache = {}

    def get(self, seed, atk):
        blinded = atk.blind_all_modes and not self.per_sweep and atk.blind_power_dbm is not None
        key = (seed, atk.blind_power_dbm if blinded else None)
        if key not in self._cache:
            ref_atk = atk if blinded else AttackSourceConfig()
            thermal = simulate_acquisition("thermal", self.det, self.adc, ref_atk, seed=seed, n_samples=self.n)
            shot = simulate_acquisition("shot", self.det, self.adc, ref_atk, seed=seed, n_samples=self.n)
            est = ExcessNoiseEstimator(self.dsp, self.t_assumed, self.eta)
            self._cache[key] = est.fit(thermal, shot)
        return self._cache[key]


def run_noise_characterization(powers=DEFAULT_CHARACTERIZATION_GRID, repeats=4, cfg=None,
                               det=None, adc=None):
    """Estimated excess noise versus ASE power, blinding off, ``repeats`` independent sweeps."""
    cfg = cfg or SweepConfig()
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    powers = np.asarray(sorted(float(p) for p in powers))
    if powers.size == 0:
        raise EmptyInputError("no ASE powers given")
    cal = _Calibrator(det, adc, cfg.dsp(), cfg.t_assumed, cfg.eta, cfg.samples_per_point)
    eps = np.empty((repeats, powers.size))
    seeds = []
    for r in range(repeats):
        seed = derive_seed(cfg.seed, r)
        seeds.append(seed)
        est = cal.get(seed, AttackSourceConfig())
        for j, p in enumerate(powers):
            pair = simulate_acquisition("noisy", det, adc, AttackSourceConfig(ase_power_dbm=p),
                                        seed=seed, n_samples=cfg.samples_per_point)
            eps[r, j] = est.estimate_from_variance(pair_variance(pair, est.dsp))[1]
    return NoiseCurve(powers, eps, tuple(seeds))


def _sweep_point(cfg, cal, det, adc, wave, noise, blind, seed):
    atk = AttackSourceConfig(ase_power_dbm=noise, blind_power_dbm=blind, blind_waveform=wave,
                             pol_mismatch_phi=cfg.pol_mismatch_phi, blind_all_modes=cfg.blind_all_modes)
    try:
        est = cal.get(seed, atk)
        pair = simulate_acquisition("noisy", det, adc, atk, seed=seed, n_samples=cfg.samples_per_point)
        _, eps = est.estimate_from_variance(pair_variance(pair, est.dsp))
        clip = watchdog_clipping(pair)
        oob = watchdog_out_of_band(pair)
        return SweepRecord(noise, blind, est.snu_, est.eps_th_, float(eps), clip.clip_fraction,
                           oob.oob_alarm, seed, clip.clip_alarm)
    except ValueError as exc:
        nan = float("nan")
        return SweepRecord(noise, blind, nan, nan, nan, nan, False, seed, False,
                           error=f"{type(exc).__name__}: {exc}")


def run_blinding_sweep(cfg=None, det=None, adc=None, progress=None):
    """One :class:`SweepRecord` per (noise, blind) grid point, noise-major order.

    Failed points carry an ``error`` string and NaN estimates.
    """
    cfg = cfg or SweepConfig()
    wave = cfg.blind_waveform()
    cal = _Calibrator(det, adc, cfg.dsp(), cfg.t_assumed, cfg.eta, cfg.samples_per_point,
                      per_sweep=cfg.calibration == "per_sweep")
    seed = derive_seed(cfg.seed, 0)
    records = []
    for noise in cfg.noise_powers_dbm:
        for blind in cfg.blind_powers_dbm:
            records.append(_sweep_point(cfg, cal, det, adc, wave, noise, blind, seed))
            if progress is not None:
                progress(records[-1])
    return records


def find_hiding_threshold(records, noise_power, threshold_snu=0.126):
    """Lowest blinding power where the estimate drops below ``threshold_snu``.

    The crossing is interpolated linearly between the bracketing grid points.
    If the first grid point is already below, it is returned with a
    degenerate bracket.
    """
    rows = sorted((r for r in records if r.noise_power_dbm == noise_power and not r.error
                   and np.isfinite(r.eps_est)), key=lambda r: r.blind_power_dbm)
    if not rows:
        raise EmptyInputError(f"no valid records for noise power {noise_power}")
    for i, r in enumerate(rows):
        if r.eps_est < threshold_snu:
            if i == 0:
                return HidingThreshold(noise_power, r.blind_power_dbm, (r.blind_power_dbm, r.blind_power_dbm))
            prev = rows[i - 1]
            frac = (prev.eps_est - threshold_snu) / (prev.eps_est - r.eps_est)
            power = prev.blind_power_dbm + frac * (r.blind_power_dbm - prev.blind_power_dbm)
            return HidingThreshold(noise_power, float(power), (prev.blind_power_dbm, r.blind_power_dbm))
    return HidingThreshold(noise_power)


# ---------------------------------------------------------------- reports


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records):
    buf = io.StringIO()
    names = [f.name for f in fields(SweepRecord)]
    buf.write(f"# schema: {CSV_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for r in records:
        writer.writerow([_fmt(getattr(r, n)) for n in names])
    return buf.getvalue()


def read_records_csv(path):
    types = {f.name: f.type for f in fields(SweepRecord)}
    out = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            kw = {}
            for name, raw in row.items():
                t = types[name]
                kw[name] = bool(int(raw)) if t in (bool, "bool") else int(raw) if t in (int, "int") else (
                    float(raw) if t in (float, "float") else raw)
            out.append(SweepRecord(**kw))
    return out


def curve_to_csv(curve):
    buf = io.StringIO()
    buf.write(f"# schema: {CURVE_SCHEMA}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ase_power_dbm"] + [f"eps_repeat{r}" for r in range(curve.eps.shape[0])] + ["eps_mean", "spread"])
    for j, p in enumerate(curve.powers_dbm):
        row = [p] + list(curve.eps[:, j]) + [curve.mean[j], curve.spread[j]]
        writer.writerow([_fmt(float(v)) for v in row])
    return buf.getvalue()


def thresholds_to_csv(thresholds):
    buf = io.StringIO()
    buf.write(f"# schema: {CSV_SCHEMA}-thresholds\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["noise_power_dbm", "threshold_dbm", "bracket_lo_dbm", "bracket_hi_dbm"])
    for t in thresholds:
        lo, hi = t.bracket if t.bracket else ("", "")
        writer.writerow([_fmt(t.noise_power_dbm), "" if t.power_dbm is None else _fmt(t.power_dbm),
                         _fmt(lo), _fmt(hi)])
    return buf.getvalue()


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "cvblind"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_sweep(records, path, threshold_snu=0.126):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for noise in sorted({r.noise_power_dbm for r in records}):
        rows = sorted((r for r in records if r.noise_power_dbm == noise), key=lambda r: r.blind_power_dbm)
        ax.plot([r.blind_power_dbm for r in rows], [r.eps_est for r in rows], marker="o", ms=3,
                label=f"ASE {noise:g} dBm")
    ax.axhline(threshold_snu, color="k", ls="--", lw=1, label=f"{threshold_snu} SNU")
    ax.set_xlabel("blinding power [dBm]")
    ax.set_ylabel("estimated excess noise [SNU]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_curve(curve, path):
    plt = _figure()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for r in range(curve.eps.shape[0]):
        ax.plot(curve.powers_dbm, curve.eps[r], marker=".", label=f"sweep {r + 1}")
    ax.set_xlabel("ASE power [dBm]")
    ax.set_ylabel("estimated excess noise [SNU]")
    ax.set_yscale("symlog", linthresh=1e-2)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def emit_report(records, curve=None, out_dir=".", formats=("csv", "svg"), threshold_snu=0.126):
    """Write the sweep CSV, hiding thresholds and plots into ``out_dir``; return the paths."""
    records = list(records)
    if not records:
        raise EmptyInputError("no sweep records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = out / "sweep.csv"
        p.write_text(records_to_csv(records))
        written.append(p)
        noises = sorted({r.noise_power_dbm for r in records})
        ths = []
        for n in noises:
            try:
                ths.append(find_hiding_threshold(records, n, threshold_snu))
            except EmptyInputError:
                ths.append(HidingThreshold(n))
        p = out / "thresholds.csv"
        p.write_text(thresholds_to_csv(ths))
        written.append(p)
        if curve is not None:
            p = out / "noise_curve.csv"
            p.write_text(curve_to_csv(curve))
            written.append(p)
    if "svg" in formats:
        p = out / "blinding_sweep.svg"
        plot_sweep(records, p, threshold_snu)
        written.append(p)
        if curve is not None:
            p = out / "noise_characterization.svg"
            plot_curve(curve, p)
            written.append(p)
    return written


__all__ = [
    "CSV_SCHEMA", "DEFAULT_BLIND_GRID", "DEFAULT_CHARACTERIZATION_GRID", "DEFAULT_NOISE_LEVELS",
    "HidingThreshold", "NoiseCurve", "SweepConfig", "SweepRecord", "derive_seed", "emit_report",
    "find_hiding_threshold", "read_records_csv", "records_to_csv", "run_blinding_sweep",
    "run_noise_characterization",
]
