"""Input validation helpers shared by the estimators and pure functions."""
import numpy as np


def check_trace(x, *, name="trace", min_length=2, allow_complex=True):
    """Return ``x`` as a finite 1-D float or complex array."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_length:
        raise ValueError(f"{name} needs at least {min_length} samples, got {arr.shape[0]}")
    if np.iscomplexobj(arr):
        if not allow_complex:
            raise ValueError(f"{name} must be real-valued")
        arr = arr.astype(np.complex128, copy=False)
    else:
        arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr


def check_same_length(*arrays, names=None):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        label = ", ".join(names) if names else "inputs"
        raise ValueError(f"{label} must have equal lengths, got {sorted(lengths)}")


def check_in_range(value, name, low=None, high=None, *, low_open=False, high_open=False):
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if low is not None and (value < low or (low_open and value == low)):
        bracket = "(" if low_open else "["
        raise ValueError(f"{name}={value} outside {bracket}{low}, {high}")
    if high is not None and (value > high or (high_open and value == high)):
        bracket = ")" if high_open else "]"
        raise ValueError(f"{name}={value} outside [{low}, {high}{bracket}")
    return value


def check_positive(value, name):
    return check_in_range(value, name, 0.0, low_open=True)
