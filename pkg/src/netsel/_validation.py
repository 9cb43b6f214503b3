"""Small input-checking helpers used across the package."""

import numpy as np

from .exceptions import DimensionError, ValidationError


def as_vector(x, length=None, name="x"):
    """Return ``x`` as a 1-D float array, optionally checking its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1) if arr.ndim == 0 else arr
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def as_sequence(z, width=None, name="z_seq"):
    """Return an output sequence as a ``(L+1, width)`` float array."""
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 1 and width == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional (samples x outputs), got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise DimensionError(f"{name} must contain at least one sample")
    if width is not None and arr.shape[1] != width:
        raise DimensionError(f"{name} must have {width} columns, got {arr.shape[1]}")
    return arr


def check_finite(arr, name="x"):
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_theta(theta, N, binary=False, name="theta"):
    """Validate a selection vector; ``binary=True`` demands entries in {0, 1}."""
    arr = as_vector(theta, N, name)
    if binary:
        if not np.all((arr == 0.0) | (arr == 1.0)):
            raise ValidationError(f"{name} must be binary (entries 0 or 1)")
    elif np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValidationError(f"{name} entries must lie in [0, 1]")
    return arr


def check_bounds(lower, upper, size):
    lo = as_vector(lower, size, "lower bound")
    hi = as_vector(upper, size, "upper bound")
    if np.any(lo > hi):
        raise ValidationError("lower bound exceeds upper bound")
    return lo, hi


def check_mode(mode):
    """Normalise a cardinality mode to ``"LE"`` or ``"EQ"``."""
    m = str(mode).upper()
    if m not in ("LE", "EQ"):
        raise ValidationError(f"mode must be 'LE' or 'EQ', got {mode!r}")
    return m


def check_cardinality(m_max, N, mode):
    m = int(m_max)
    if m != m_max or m < 0 or m > N:
        raise ValidationError(f"m_max must be an integer in [0, {N}], got {m_max!r}")
    if mode == "EQ" and m == 0:
        raise ValidationError("m_max=0 with equality mode selects no sensors")
    return m
