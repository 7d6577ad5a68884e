"""Pinned calibration fixture.

The detector gain chain, LO power, electronic-noise density and ASE coupling
are not published for the real receiver.  ``data/calibration.json`` holds the
values that reproduce the observable anchors: full ADC clipping at -13 dBm of
square-wave blinding and about 2.49 SNU estimated excess noise at -27 dBm of
ASE.  ``data/security.json`` holds the key-rate parameters that put the
maximum tolerable excess noise at 0.126 SNU.
"""
import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def _load(name):
    with resources.files("cvblind").joinpath("data", name).open("r") as fh:
        return json.load(fh)


def receiver_fixture():
    return _load("calibration.json")


def security_fixture():
    return _load("security.json")
