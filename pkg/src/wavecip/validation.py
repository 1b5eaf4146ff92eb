"""Input validation helpers shared across the package."""

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def check_positive(value, name):
    value = np.asarray(value, dtype=float)
    if not np.all(value > 0):
        raise ValidationError(f"{name} must be strictly positive, got {value}")
    return value


def check_finite(array, name):
    array = np.asarray(array)
    if not np.all(np.isfinite(array)):
        bad = int(np.count_nonzero(~np.isfinite(array)))
        raise ValidationError(f"{name} contains {bad} non-finite values")
    return array


def check_vector3(value, name):
    value = np.asarray(value, dtype=float)
    if value.shape != (3,):
        raise ValidationError(f"{name} must be a 3-vector, got shape {value.shape}")
    return value


def check_counts(counts, name, minimum=2, ndim=3):
    counts = np.asarray(counts)
    if counts.shape != (ndim,) or not np.issubdtype(counts.dtype, np.integer):
        counts = counts.astype(int)
        if counts.shape != (ndim,):
            raise ValidationError(f"{name} must be {ndim} integers")
    if np.any(counts < minimum):
        raise ValidationError(f"{name} must be >= {minimum} per axis, got {tuple(counts)}")
    return tuple(int(c) for c in counts)


def check_trace_cube(cube, name="cube"):
    """Check the finiteness/shape invariants a trace cube must satisfy."""
    check_finite(cube.traces, f"{name}.traces")
    if cube.dt <= 0:
        raise ValidationError(f"{name}.dt must be positive")
    if cube.traces.ndim != 3:
        raise ValidationError(f"{name}.traces must be (nx, ny, nt)")
    if cube.traces.shape[:2] != tuple(cube.xy_grid.counts):
        raise ValidationError(f"{name}.traces shape {cube.traces.shape} does not match grid")
    return cube


def check_epsilon_bounds(values, upper, name="epsilon"):
    values = np.asarray(values)
    if values.min() < 1.0 - 1e-12 or values.max() > upper + 1e-12:
        raise ValidationError(
            f"{name} must lie in [1, {upper}], got range [{values.min()}, {values.max()}]"
        )
    return values
