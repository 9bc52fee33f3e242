"""Small input-validation helpers used across the package."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array, check_X_y  # noqa: F401

from .exceptions import ParameterError

SIMPLEX_ATOL = 1e-9


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ParameterError(f"{name} must be a finite real, got {value!r}")
    if strict and value <= 0:
        raise ParameterError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ParameterError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_int(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_unit_interval(value, name, open_left=False, open_right=False):
    value = float(value)
    lo_bad = value <= 0 if open_left else value < 0
    hi_bad = value >= 1 if open_right else value > 1
    if not np.isfinite(value) or lo_bad or hi_bad:
        raise ParameterError(f"{name} must lie in the unit interval, got {value!r}")
    return value


def check_simplex(weights, name="weights", atol=SIMPLEX_ATOL):
    """Return ``weights`` as a float array, raising unless it is on the simplex."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ParameterError(f"{name} must be a non-empty vector")
    if np.any(w < -atol) or not np.all(np.isfinite(w)):
        raise ParameterError(f"{name} has negative or non-finite entries")
    if abs(w.sum() - 1.0) > atol:
        raise ParameterError(f"{name} must sum to 1, sums to {w.sum()!r}")
    return w
