"""Command-line entry point, ``cvblind <subcommand>``."""
import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import config as cfgmod
from .blindwave import notch_filter, phase_excursion, square_wave, verify_notch, write_csv, write_envelope
from .constellation import compute_W, compute_Z, mean_photon_number
from .dsp import ExcessNoiseEstimator, watchdog_clipping, watchdog_out_of_band
from .harness import (DEFAULT_CHARACTERIZATION_GRID, curve_to_csv, emit_report, find_hiding_threshold,
                      plot_curve, read_records_csv, run_blinding_sweep, run_noise_characterization)
from .rxsim import MODES, read_trace, simulate_acquisition, write_trace
from .secproof import covariance_matrix, holevo_bound, key_rate, max_tolerable_noise, mutual_information


def _emit(values, csv_path=None, out=None):
    """Structured ``key: value`` lines on stdout, optionally one CSV row."""
    out = out or sys.stdout
    for k, v in values.items():
        out.write(f"{k}: {v}\n")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(values), lineterminator="\n")
            w.writeheader()
            w.writerow(values)


def cmd_keyrate(args):
    params, const = cfgmod.security_from_config(cfgmod.load_config(args.config))
    if args.eps is not None:
        params = params.with_eps(args.eps)
    n = mean_photon_number(const)
    z = compute_Z(const, eps=params.eps)
    m = covariance_matrix(n, params.T, params.eps, z)
    _emit({
        "n_mean": n,
        "Z": z,
        "W": compute_W(const),
        "I_BA": mutual_information(params, n),
        "chi_BE": holevo_bound(m),
        "key_rate": key_rate(params, const),
    }, args.csv)


def cmd_max_noise(args):
    params, const = cfgmod.security_from_config(cfgmod.load_config(args.config))
    eps = max_tolerable_noise(params, const)
    _emit({"n_mean": mean_photon_number(const), "T": params.T, "eta": params.eta,
           "beta": params.beta, "eps_th": params.eps_th, "max_tolerable_noise_snu": eps}, args.csv)


def cmd_watchdog(args):
    pair = read_trace(args.trace)
    oob = watchdog_out_of_band(pair, tuple(args.band), args.baseline_db)
    clip = watchdog_clipping(pair)
    _emit({"trace": args.trace, "out_of_band_power_db": oob.out_of_band_power_db,
           "oob_alarm": oob.oob_alarm, "clip_fraction": clip.clip_fraction,
           "clip_alarm": clip.clip_alarm}, args.csv)
    return 2 if (oob.oob_alarm or clip.clip_alarm) else 0


def cmd_estimate(args):
    thermal, shot, noisy = (read_trace(p) for p in (args.thermal, args.shot, args.noisy))
    section = cfgmod.load_config(args.config).get("dsp")
    # same combination as the sweep harness unless the config says otherwise
    dsp = cfgmod.dsp_from_dict(section) if section is not None else cfgmod.sweep_from_dict({}).dsp()
    est = ExcessNoiseEstimator(dsp, args.t_assumed, args.eta).fit(thermal, shot)
    _emit(asdict(est.report(noisy)), args.csv)


def cmd_design_blindwave(args):
    w = square_wave(args.freq, args.rate, args.duty)
    band = tuple(args.band)
    notched = notch_filter(w, band)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(notched, out / "blindwave.csv")
    write_envelope(notched, out / "blindwave.bin")
    _emit({"freq_hz": args.freq, "rate": args.rate, "band_lo_hz": band[0], "band_hi_hz": band[1],
           "samples_per_period": notched.envelope.size,
           "in_band_suppression_db": verify_notch(notched, band, w),
           "phase_excursion_rad": phase_excursion(notched),
           "csv": str(out / "blindwave.csv"), "envelope": str(out / "blindwave.bin")})


def cmd_acquire(args):
    cfg = cfgmod.load_config(args.config)
    det, adc, atk = cfgmod.receiver_from_config(cfg)
    overrides = {}
    if args.ase_dbm is not None:
        overrides["ase_power_dbm"] = args.ase_dbm
    if args.blind_dbm is not None:
        overrides["blind_power_dbm"] = args.blind_dbm
    if overrides:
        atk = type(atk)(**{**{k: getattr(atk, k) for k in atk.__dataclass_fields__}, **overrides})
    pair = simulate_acquisition(args.mode, det, adc, atk, seed=args.seed, n_samples=args.samples)
    write_trace(pair, args.out)
    _emit({"trace": args.out, "mode": args.mode, "n_samples": len(pair), "seed": args.seed,
           "config_hash": pair.config_hash})


def _sweep_config(args):
    cfg = cfgmod.load_config(args.config)
    sweep = dict(cfg.get("sweep", {}))
    if getattr(args, "samples", None):
        sweep["samples_per_point"] = args.samples
    if getattr(args, "seed", None) is not None:
        sweep["seed"] = args.seed
    det = cfgmod.detector_from_dict(cfg.get("detector"))
    adc = cfgmod.adc_from_dict(cfg.get("adc"))
    return cfgmod.sweep_from_dict(sweep), det, adc, cfg


def cmd_sweep(args):
    sweep, det, adc, _ = _sweep_config(args)

    def progress(r):
        if not args.quiet:
            sys.stderr.write(f"noise {r.noise_power_dbm:g} dBm  blind {r.blind_power_dbm:g} dBm  "
                             f"eps {r.eps_est:.4f}\n")

    records = run_blinding_sweep(sweep, det, adc, progress=progress)
    paths = emit_report(records, None, args.out, threshold_snu=sweep.threshold_snu)
    for n in sweep.noise_powers_dbm:
        t = find_hiding_threshold(records, n, sweep.threshold_snu)
        print(f"hiding_threshold[{n:g} dBm]: {t.power_dbm if t.crossed else 'none'}")
    for p in paths:
        print(f"wrote: {p}")
    return 1 if any(r.error for r in records) else 0


def cmd_characterize_noise(args):
    sweep, det, adc, cfg = _sweep_config(args)
    powers = cfg.get("characterization_powers_dbm", DEFAULT_CHARACTERIZATION_GRID)
    curve = run_noise_characterization(powers, args.repeats, sweep, det, adc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "noise_curve.csv").write_text(curve_to_csv(curve))
    plot_curve(curve, out / "noise_characterization.svg")
    for p, m, s in zip(curve.powers_dbm, curve.mean, curve.spread):
        print(f"ase {p:g} dBm: eps {m:.6g} SNU  spread {s:.3%}")
    print(f"wrote: {out / 'noise_curve.csv'}")
    print(f"wrote: {out / 'noise_characterization.svg'}")


def cmd_threshold(args):
    sweep, det, adc, _ = _sweep_config(args)
    if args.records:
        records = read_records_csv(args.records)
    else:
        sweep = type(sweep).from_dict({**sweep.to_dict(), "noise_powers_dbm": [args.noise_dbm]})
        records = run_blinding_sweep(sweep, det, adc)
    t = find_hiding_threshold(records, args.noise_dbm, args.threshold)
    _emit({"noise_power_dbm": args.noise_dbm, "threshold_snu": args.threshold,
           "hiding_threshold_dbm": t.power_dbm if t.crossed else "none",
           "bracket": json.dumps(list(t.bracket)) if t.bracket else "none"})


def build_parser():
    p = argparse.ArgumentParser(prog="cvblind", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("keyrate", help="asymptotic key rate")
    s.add_argument("--config", help="JSON with 'constellation' and 'channel' sections")
    s.add_argument("--eps", type=float, help="excess noise in SNU (overrides config)")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_keyrate)

    s = sub.add_parser("max-noise", help="largest excess noise with a positive key rate")
    s.add_argument("--config")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_max_noise)

    s = sub.add_parser("watchdog", help="run both blinding monitors on a trace file")
    s.add_argument("trace")
    s.add_argument("--band", type=float, nargs=2, default=(2.5e8, 5.5e8), metavar=("LO", "HI"))
    s.add_argument("--baseline-db", type=float, default=None)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_watchdog)

    s = sub.add_parser("estimate", help="SNU calibration and excess noise from three trace files")
    s.add_argument("thermal")
    s.add_argument("shot")
    s.add_argument("noisy")
    s.add_argument("--config")
    s.add_argument("--t-assumed", type=float, default=0.5)
    s.add_argument("--eta", type=float, default=0.9)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("design-blindwave", help="notched square-wave blinding envelope")
    s.add_argument("--freq", type=float, default=1e7)
    s.add_argument("--band", type=float, nargs=2, default=(2.1e8, 7.5e8), metavar=("LO", "HI"))
    s.add_argument("--rate", type=float, default=3.2e9)
    s.add_argument("--duty", type=float, default=0.5)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_design_blindwave)

    s = sub.add_parser("acquire", help="simulate one acquisition and write a trace file")
    s.add_argument("--mode", choices=MODES, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--samples", type=int, default=2 ** 20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ase-dbm", type=float)
    s.add_argument("--blind-dbm", type=float)
    s.set_defaults(func=cmd_acquire)

    s = sub.add_parser("sweep", help="blinding power x noise power sweep")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("characterize-noise", help="excess noise versus ASE power, repeated sweeps")
    s.add_argument("--config")
    s.add_argument("--out", default=".")
    s.add_argument("--repeats", type=int, default=4)
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_characterize_noise)

    s = sub.add_parser("threshold", help="hiding threshold for one noise level")
    s.add_argument("--noise-dbm", type=float, required=True)
    s.add_argument("--threshold", type=float, default=0.126)
    s.add_argument("--records", help="sweep CSV to read instead of simulating")
    s.add_argument("--config")
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_threshold)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
