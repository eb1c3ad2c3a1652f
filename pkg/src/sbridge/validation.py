"""Input validation helpers shared across the package."""

import numpy as np


def as_float_array(x, name="signal"):
    """Coerce to a 1-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_complex_array(x, name="coefficients"):
    """Coerce to a complex128 array, rejecting non-finite input."""
    arr = np.asarray(x, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_same_shape(a, b, name_a="a", name_b="b"):
    if np.shape(a) != np.shape(b):
        raise ValueError(
            f"shape mismatch: {name_a} has {np.shape(a)}, {name_b} has {np.shape(b)}"
        )


def check_time_range(t, t_max, name="t"):
    """Require t (scalar or array) to lie in [0, t_max]."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > t_max):
        raise ValueError(f"{name} must lie in [0, {t_max}], got {t}")
    return t


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
