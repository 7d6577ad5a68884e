"""Simulation toolkit for detector-blinding attacks on a CV-QKD heterodyne receiver."""
from .blindwave import BlindWaveform, notch_filter, square_wave, verify_notch
from .constellation import Constellation, compute_W, compute_Z, make_ps_qam, make_psk
from .dsp import (BlindingWatchdog, DspConfig, ExcessNoiseEstimator, LinearModelEstimator,
                  PolarizationCombiner, calibrate_and_estimate)
from .rxsim import AdcConfig, AttackSourceConfig, DetectorChainConfig, WaveformPair, simulate_acquisition
from .secproof import ChannelParams, key_rate, max_tolerable_noise

__version__ = "0.1.0"

__all__ = [
    "AdcConfig", "AttackSourceConfig", "BlindWaveform", "BlindingWatchdog", "ChannelParams",
    "Constellation", "DetectorChainConfig", "DspConfig", "ExcessNoiseEstimator",
    "LinearModelEstimator", "PolarizationCombiner", "WaveformPair", "calibrate_and_estimate",
    "compute_W", "compute_Z", "key_rate", "make_ps_qam", "make_psk", "max_tolerable_noise",
    "notch_filter", "simulate_acquisition", "square_wave", "verify_notch",
]
