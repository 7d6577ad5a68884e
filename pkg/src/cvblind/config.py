"""JSON configuration files for every ``*Config`` record.

A config file is one JSON object with optional sections ``detector``,
``adc``, ``attack``, ``dsp``, ``sweep``, ``channel`` and ``constellation``.
Missing sections fall back to the pinned calibration fixture.
"""
import json
from dataclasses import fields
from pathlib import Path

from .blindwave import notch_filter, read_envelope, square_wave
from .calibration import security_fixture
from .constellation import constellation_from_config
from .dsp import DspConfig
from .harness import SweepConfig
from .rxsim import AdcConfig, AttackSourceConfig, DetectorChainConfig
from .secproof import ChannelParams


def load_config(path):
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a JSON object")
    return data


def dataclass_from_dict(cls, d, skip=()):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known - set(skip)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: v for k, v in d.items() if k in known})


def waveform_from_dict(d, rate=3.2e9):
    """``{"file": path}`` or ``{"freq": Hz, "duty": x, "notch": [lo, hi]}``."""
    if d is None:
        return None
    if "file" in d:
        return read_envelope(d["file"])
    w = square_wave(float(d.get("freq", 1e7)), rate, float(d.get("duty", 0.5)))
    if d.get("notch"):
        w = notch_filter(w, tuple(d["notch"]))
    return w


def detector_from_dict(d):
    return dataclass_from_dict(DetectorChainConfig, d)


def adc_from_dict(d):
    return dataclass_from_dict(AdcConfig, d)


def attack_from_dict(d, rate=3.2e9):
    d = dict(d or {})
    wave = waveform_from_dict(d.pop("blind_waveform", None), rate)
    atk = dataclass_from_dict(AttackSourceConfig, d)
    if wave is not None:
        atk = AttackSourceConfig(**{**{f.name: getattr(atk, f.name) for f in fields(atk)}, "blind_waveform": wave})
    return atk


def dsp_from_dict(d):
    return dataclass_from_dict(DspConfig, d)


def sweep_from_dict(d):
    return SweepConfig.from_dict(dict(d or {}))


def receiver_from_config(cfg):
    det = detector_from_dict(cfg.get("detector"))
    adc = adc_from_dict(cfg.get("adc"))
    atk = attack_from_dict(cfg.get("attack"), adc.sample_rate)
    return det, adc, atk


def security_from_config(cfg):
    """``(ChannelParams, Constellation)``; the security fixture fills the gaps."""
    base = security_fixture()
    const_cfg = cfg.get("constellation", base["constellation"])
    const = constellation_from_config(const_cfg)
    chan = {k: base[k] for k in ("T", "eta", "eps_th", "beta")}
    chan.update(cfg.get("channel", {}))
    params = dataclass_from_dict(ChannelParams, chan)
    return params, const
