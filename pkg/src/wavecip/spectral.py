"""Laplace-domain layer: pseudo-frequency grids, transforms, tails and boundary data.

The positive transform parameter s (the pseudo frequency) replaces time; the
inversion marches over a descending grid of s values in [s_min, s_max].
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .grids import Grid2, ScalarField3
from .validation import ValidationError, check_finite

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoFreqGrid:
    """Descending pseudo-frequency grid s_0 > s_1 > ... > s_N covering [s_min, s_max]."""

    s_min: float = 8.0
    s_max: float = 10.0
    step: float = 0.05

    def __post_init__(self):
        if not (self.s_max > self.s_min > 0) or self.step <= 0:
            raise ValidationError("need s_max > s_min > 0 and step > 0")
        n = (self.s_max - self.s_min) / self.step
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValidationError(
                f"interval ({self.s_min}, {self.s_max}) is not a multiple of step {self.step}"
            )

    @property
    def n_layers(self):
        return int(round((self.s_max - self.s_min) / self.step))

    @property
    def s_values(self):
        """Grid samples s_0 = s_max down to s_N = s_min."""
        return self.s_max - self.step * np.arange(self.n_layers + 1)

    def layer_bounds(self, n):
        """Layer n covers (s_n, s_{n-1}]; n runs from 1 to N."""
        if not 1 <= n <= self.n_layers:
            raise ValidationError(f"layer index {n} outside 1..{self.n_layers}")
        s = self.s_values
        return float(s[n]), float(s[n - 1])


@dataclass(frozen=True)
class PseudoFreqSeries:
    """Values of w or psi on a boundary-plane grid, one slice per s sample."""

    xy_grid: Grid2
    s_values: np.ndarray
    values: np.ndarray
    plane_z: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.s_values, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (*self.xy_grid.counts, s.size):
            raise ValidationError(f"series shape {v.shape} does not match grid/samples")
        object.__setattr__(self, "s_values", s)
        object.__setattr__(self, "values", v)

    def at(self, s):
        idx = np.where(np.isclose(self.s_values, s, rtol=0, atol=1e-10))[0]
        if idx.size != 1:
            raise ValidationError(f"s={s} is not a sample of this series")
        return self.values[:, :, idx[0]]


def trapezoid_weights(n_samples, dt):
    w = np.full(n_samples, dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def check_decayed(trace, tail_fraction=0.05, level=0.01):
    """True when the last 5% of samples stay below 1% of the trace maximum."""
    trace = np.asarray(trace)
    n_tail = max(1, int(round(trace.shape[-1] * tail_fraction)))
    peak = np.max(np.abs(trace))
    if peak == 0:
        return True
    return bool(np.max(np.abs(trace[..., -n_tail:])) <= level * peak)


def laplace_transform(trace, dt, s, warn_undecayed=True):
    """Trapezoidal transform of a sampled trace starting at t = 0.

    Returns (value, truncation_bound): the quadrature value of
    ``integral of u * exp(-s t)`` over the recorded window and the bound
    ``exp(-s T) * max|u| / s`` on the neglected tail.
    """
    trace = np.asarray(trace, dtype=float)
    if s <= 0:
        raise ValidationError("pseudo frequency s must be positive")
    if warn_undecayed and not check_decayed(trace):
        log.warning("laplace_transform: trace has not decayed at the end of the window")
    t = dt * np.arange(trace.shape[-1])
    w = trapezoid_weights(trace.shape[-1], dt)
    value = float(np.dot(trace, w * np.exp(-s * t)))
    bound = float(np.exp(-s * t[-1]) * np.max(np.abs(trace)) / s)
    return value, bound


def laplace_transform_cube(traces, dt, s_values, warn_undecayed=True):
    """Vectorized transform of an (..., nt) trace array for several s values."""
    traces = np.asarray(traces, dtype=float)
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    if np.any(s_values <= 0):
        raise ValidationError("pseudo frequencies must be positive")
    if warn_undecayed and not check_decayed(traces):
        log.warning("laplace_transform_cube: data have not decayed at the end of the window")
    t = dt * np.arange(traces.shape[-1])
    kernel = trapezoid_weights(traces.shape[-1], dt)[:, None] * np.exp(-np.outer(t, s_values))
    return traces @ kernel


def v_of_w(w, s, where=None):
    """v = ln(w) / s^2; hard error on non-positive w naming the offending index."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        bad = np.argwhere(w <= 0)
        first = tuple(int(v) for v in bad[0]) if bad.size else ()
        name = where or "input"
        raise ValidationError(
            f"non-positive w in {name} at {len(bad)} points, first index {first}"
        )
    return np.log(w) / (s * s)


def clamp_positive(w, floor_fraction=1e-12, max_bad_fraction=0.01, where="w"):
    """Clamp isolated non-positive w values to a floor; fail if they are systematic."""
    w = np.asarray(w, dtype=float)
    peak = float(np.max(w)) if w.size else 0.0
    if peak <= 0:
        raise ValidationError(f"{where}: all values non-positive, calibration failed")
    bad = w <= 0
    n_bad = int(np.count_nonzero(bad))
    if n_bad == 0:
        return w
    if n_bad > max_bad_fraction * w.size:
        raise ValidationError(
            f"{where}: {n_bad}/{w.size} non-positive values exceeds the "
            f"{max_bad_fraction:.0%} tolerance"
        )
    log.warning("%s: clamped %d non-positive values to floor", where, n_bad)
    out = w.copy()
    out[bad] = floor_fraction * peak
    return out


def psi_from_phi(phi_minus, phi_center, phi_plus, s, delta):
    """Boundary data psi(s) from three samples of phi around s.

    Uses the central difference (phi(s+delta) - phi(s-delta)) / (2 delta) for
    the s-derivative in psi = d_s(phi)/(s^2 phi) - 2 ln(phi)/s^3.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    for name, arr in (("phi(s-delta)", phi_minus), ("phi(s)", phi_center),
                      ("phi(s+delta)", phi_plus)):
        arr = np.asarray(arr, dtype=float)
        if np.any(arr <= 0):
            raise ValidationError(f"non-positive {name} sample in psi computation")
    phi_minus = np.asarray(phi_minus, dtype=float)
    phi_center = np.asarray(phi_center, dtype=float)
    phi_plus = np.asarray(phi_plus, dtype=float)
    dphi = (phi_plus - phi_minus) / (2.0 * delta)
    return dphi / (s * s * phi_center) - 2.0 * np.log(phi_center) / s**3


def psi_layer_average(psi_samples, n, grid):
    """Two-point layer average 0.5 * [psi(s_n) + psi(s_{n-1})].

    ``psi_samples`` holds psi at the grid samples s_0..s_N along its last axis.
    """
    if not 1 <= n <= grid.n_layers:
        raise ValidationError(f"layer index {n} outside 1..{grid.n_layers}")
    psi_samples = np.asarray(psi_samples, dtype=float)
    return 0.5 * (psi_samples[..., n] + psi_samples[..., n - 1])


def tail_from_w(w_field, s_bar):
    """Tail V(x) = ln(w(x, s_bar)) / s_bar^2 as a field on the same grid."""
    values = v_of_w(w_field.values, s_bar, where="tail field")
    return ScalarField3(w_field.grid, values)
