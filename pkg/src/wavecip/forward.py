"""Explicit finite-difference solver for the bounded-domain wave problem.

The medium is excited through a Neumann flux f(t) = sin(omega t) on the top
face during one period; afterwards that face becomes absorbing. The bottom
face is absorbing for all times and the lateral faces carry a homogeneous
Neumann condition. The same kernel synthesizes measurement data and performs
every tail update inside the inversion loop.
"""

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .grids import Grid2, Grid3, ScalarField3, TraceCube
from .spectral import trapezoid_weights
from .validation import ValidationError, check_finite

log = logging.getLogger(__name__)


def incident_waveform(t, omega):
    """Excitation flux sin(omega t) for 0 <= t <= 2 pi / omega, zero outside."""
    t = np.asarray(t, dtype=float)
    t1 = 2.0 * np.pi / omega
    out = np.where((t >= 0.0) & (t <= t1), np.sin(omega * t), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class WaveSnapshotSeries:
    """Full-volume snapshots of u at strictly increasing times."""

    times: np.ndarray
    fields: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.size and np.any(np.diff(times) <= 0):
            raise ValidationError("snapshot times must be strictly increasing")
        object.__setattr__(self, "times", times)


@dataclass(frozen=True)
class FaceTraces:
    """Full-rate traces of u on the six faces of a sub-box (used for boundary data)."""

    subgrid: Grid3
    dt: float
    faces: dict

    def laplace(self, s_values):
        """Transform every face trace; returns face -> (..., n_s) arrays."""
        from .spectral import laplace_transform_cube

        return {
            name: laplace_transform_cube(data, self.dt, s_values, warn_undecayed=False)
            for name, data in self.faces.items()
        }


@dataclass
class ForwardConfig:
    """Configuration of one bounded-domain wave solve."""

    grid: Grid3
    epsilon: ScalarField3
    omega: float = 30.0
    final_time: float = 1.2
    dt: float = 0.0015
    source_amplitude: float = 1.0
    cfl_factor: float = 1.0
    record_plane_z: float = None
    record_xy: Grid2 = None
    record_stride: int = 2
    boundary_subgrid: Grid3 = None
    laplace_s: tuple = ()
    snapshot_stride: int = 0
    nan_check_every: int = 50

    def __post_init__(self):
        if self.epsilon.grid != self.grid:
            raise ValidationError("epsilon must live on the solver grid")
        check_finite(self.epsilon.values, "epsilon")
        if self.epsilon.values.min() < 1.0 - 1e-12:
            raise ValidationError("epsilon must be >= 1 everywhere")
        if self.omega <= 0:
            raise ValidationError("omega must be positive")
        t1 = 2.0 * np.pi / self.omega
        if self.final_time <= t1:
            raise ValidationError(f"final time {self.final_time} must exceed t1 = {t1:.4f}")
        h_min = min(self.grid.spacing)
        limit = self.cfl_factor * h_min / np.sqrt(3.0)
        if not (0 < self.cfl_factor <= 1.0) or self.dt > limit + 1e-15:
            raise ValidationError(
                f"dt = {self.dt} violates the CFL bound {limit:.6f} (h_min = {h_min})"
            )
        self.n_steps = int(round(self.final_time / self.dt))
        if self.record_plane_z is not None and self.n_steps % self.record_stride:
            raise ValidationError("number of steps must be a multiple of record_stride")

    def cache_key(self):
        """Geometry/numerics key; deliberately ignores epsilon (used for the
        homogeneous-medium cache)."""
        rec = None
        if self.record_xy is not None:
            rec = (self.record_xy.origin, self.record_xy.spacing, self.record_xy.counts)
        sub = None
        if self.boundary_subgrid is not None:
            g = self.boundary_subgrid
            sub = (g.origin, g.spacing, g.counts)
        g = self.grid
        return (
            g.origin, g.spacing, g.counts, self.omega, self.final_time, self.dt,
            self.source_amplitude, self.record_plane_z, rec, self.record_stride, sub,
            tuple(self.laplace_s), self.snapshot_stride,
        )


@dataclass
class ForwardResult:
    traces: TraceCube = None
    boundary: FaceTraces = None
    w_volume: dict = field(default_factory=dict)
    snapshots: WaveSnapshotSeries = None
    n_steps: int = 0
    runtime_s: float = 0.0


class _FaceRecorder:
    def __init__(self, grid, subgrid, n_samples):
        off = grid.index_of(subgrid.point(0, 0, 0))
        for d in range(3):
            ratio = subgrid.spacing[d] / grid.spacing[d]
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValidationError("boundary subgrid must align with the solver grid")
        self.step = tuple(int(round(subgrid.spacing[d] / grid.spacing[d])) for d in range(3))
        self.off = off
        self.sub = subgrid
        mx, my, mz = subgrid.counts
        self.data = {
            "x-": np.empty((my, mz, n_samples)),
            "x+": np.empty((my, mz, n_samples)),
            "y-": np.empty((mx, mz, n_samples)),
            "y+": np.empty((mx, mz, n_samples)),
            "z-": np.empty((mx, my, n_samples)),
            "z+": np.empty((mx, my, n_samples)),
        }

    def record(self, u, sample):
        (oi, oj, ok) = self.off
        (si, sj, sk) = self.step
        mx, my, mz = self.sub.counts
        sx = slice(oi, oi + si * mx, si)
        sy = slice(oj, oj + sj * my, sj)
        sz = slice(ok, ok + sk * mz, sk)
        self.data["x-"][:, :, sample] = u[oi, sy, sz]
        self.data["x+"][:, :, sample] = u[oi + si * (mx - 1), sy, sz]
        self.data["y-"][:, :, sample] = u[sx, oj, sz]
        self.data["y+"][:, :, sample] = u[sx, oj + sj * (my - 1), sz]
        self.data["z-"][:, :, sample] = u[sx, sy, ok]
        self.data["z+"][:, :, sample] = u[sx, sy, ok + sk * (mz - 1)]


def run_forward(cfg):
    """Leapfrog solve of the wave problem; see the module docstring for the BCs."""
    start = _time.perf_counter()
    g = cfg.grid
    nx, ny, nz = g.counts
    hx, hy, hz = g.spacing
    dt = cfg.dt
    eps = cfg.epsilon.values
    inv_eps = 1.0 / eps
    t1 = 2.0 * np.pi / cfg.omega

    cx, cy, cz = (dt / hx) ** 2, (dt / hy) ** 2, (dt / hz) ** 2
    alpha_top = dt / (eps[:, :, -1] * hz)
    alpha_bot = dt / (eps[:, :, 0] * hz)

    pad_prev = np.zeros((nx + 2, ny + 2, nz + 2))
    pad_curr = np.zeros((nx + 2, ny + 2, nz + 2))
    u_prev = pad_prev[1:-1, 1:-1, 1:-1]
    u_curr = pad_curr[1:-1, 1:-1, 1:-1]

    n_steps = cfg.n_steps
    times = dt * np.arange(n_steps + 1)
    lweights = trapezoid_weights(n_steps + 1, dt)

    # recorders ------------------------------------------------------------
    traces = None
    k_rec = None
    rec_index = None
    if cfg.record_plane_z is not None:
        k_rec = int(round((cfg.record_plane_z - g.origin[2]) / hz))
        if abs(g.origin[2] + k_rec * hz - cfg.record_plane_z) > 1e-9 or not 0 <= k_rec < nz:
            raise ValidationError("record_plane_z does not lie on a grid plane")
        rec_xy = cfg.record_xy or g.xy_grid()
        i0, j0 = (
            int(round((rec_xy.origin[d] - g.origin[d]) / g.spacing[d])) for d in range(2)
        )
        rec_index = (
            slice(i0, i0 + int(round(rec_xy.spacing[0] / hx)) * rec_xy.counts[0],
                  int(round(rec_xy.spacing[0] / hx))),
            slice(j0, j0 + int(round(rec_xy.spacing[1] / hy)) * rec_xy.counts[1],
                  int(round(rec_xy.spacing[1] / hy))),
        )
        n_rec = n_steps // cfg.record_stride + 1
        traces = np.zeros((*rec_xy.counts, n_rec))

    faces = None
    if cfg.boundary_subgrid is not None:
        faces = _FaceRecorder(g, cfg.boundary_subgrid, n_steps + 1)
        faces.record(u_curr, 0)

    w_acc = {float(s): np.zeros((nx, ny, nz)) for s in cfg.laplace_s}

    snap_times = []
    snap_fields = []

    def record(level, m):
        if traces is not None and m % cfg.record_stride == 0:
            traces[:, :, m // cfg.record_stride] = level[rec_index][:, :, k_rec]
        if faces is not None and m > 0:
            faces.record(level, m)
        for s, acc in w_acc.items():
            acc += (lweights[m] * np.exp(-s * times[m])) * level
        if cfg.snapshot_stride and m % cfg.snapshot_stride == 0:
            snap_times.append(times[m])
            snap_fields.append(ScalarField3(g, level.copy()))

    record(u_curr, 0)  # t = 0
    record(u_curr, 1)  # t = dt: zero because f(0) = 0 and both initial conditions vanish

    for m in range(1, n_steps):
        t_m = times[m]
        # ghost layers implementing the Neumann conditions
        pad_curr[0, :, :] = pad_curr[2, :, :]
        pad_curr[-1, :, :] = pad_curr[-3, :, :]
        pad_curr[:, 0, :] = pad_curr[:, 2, :]
        pad_curr[:, -1, :] = pad_curr[:, -3, :]
        pad_curr[:, :, 0] = pad_curr[:, :, 2]
        if t_m <= t1:
            pad_curr[:, :, -1] = pad_curr[:, :, -3] + (
                2.0 * hz * cfg.source_amplitude * np.sin(cfg.omega * t_m)
            )
        else:
            pad_curr[:, :, -1] = pad_curr[:, :, -3]

        lap = cx * (pad_curr[2:, 1:-1, 1:-1] + pad_curr[:-2, 1:-1, 1:-1])
        lap += cy * (pad_curr[1:-1, 2:, 1:-1] + pad_curr[1:-1, :-2, 1:-1])
        lap += cz * (pad_curr[1:-1, 1:-1, 2:] + pad_curr[1:-1, 1:-1, :-2])
        lap -= (2.0 * (cx + cy + cz)) * u_curr

        u_next = 2.0 * u_curr - u_prev + inv_eps * lap

        # first-order absorbing faces: closed-form update of the boundary nodes
        u_next[:, :, 0] = (
            2.0 * u_curr[:, :, 0]
            - (1.0 - alpha_bot) * u_prev[:, :, 0]
            + inv_eps[:, :, 0] * lap[:, :, 0]
        ) / (1.0 + alpha_bot)
        if t_m > t1:
            u_next[:, :, -1] = (
                2.0 * u_curr[:, :, -1]
                - (1.0 - alpha_top) * u_prev[:, :, -1]
                + inv_eps[:, :, -1] * lap[:, :, -1]
            ) / (1.0 + alpha_top)

        pad_prev, pad_curr = pad_curr, pad_prev
        u_prev = pad_prev[1:-1, 1:-1, 1:-1]
        u_curr = pad_curr[1:-1, 1:-1, 1:-1]
        u_curr[:] = u_next

        if (m + 1) % cfg.nan_check_every == 0 and not np.isfinite(u_next.max()):
            raise FloatingPointError(f"solution blew up at step {m + 1} (t = {times[m + 1]:.4f})")
        if m + 1 >= 2:
            record(u_curr, m + 1)

    result = ForwardResult(n_steps=n_steps, runtime_s=_time.perf_counter() - start)
    if traces is not None:
        rec_xy = cfg.record_xy or g.xy_grid()
        result.traces = TraceCube(cfg.record_plane_z, rec_xy, dt * cfg.record_stride, traces)
    if faces is not None:
        result.boundary = FaceTraces(cfg.boundary_subgrid, dt, faces.data)
    result.w_volume = {s: acc for s, acc in w_acc.items()}
    if cfg.snapshot_stride:
        result.snapshots = WaveSnapshotSeries(np.array(snap_times), tuple(snap_fields))
    log.debug("forward solve: %d steps on %s in %.2f s", n_steps, g.counts, result.runtime_s)
    return result


_HOMOGENEOUS_CACHE = {}
_HOMOGENEOUS_CACHE_LIMIT = 6


def run_forward_homogeneous(cfg):
    """run_forward with epsilon = 1, cached on the geometry/numerics key."""
    key = cfg.cache_key()
    if key not in _HOMOGENEOUS_CACHE:
        while len(_HOMOGENEOUS_CACHE) >= _HOMOGENEOUS_CACHE_LIMIT:
            _HOMOGENEOUS_CACHE.pop(next(iter(_HOMOGENEOUS_CACHE)))
        homog = ForwardConfig(
            grid=cfg.grid,
            epsilon=ScalarField3(cfg.grid, np.ones(cfg.grid.shape)),
            omega=cfg.omega,
            final_time=cfg.final_time,
            dt=cfg.dt,
            source_amplitude=cfg.source_amplitude,
            cfl_factor=cfg.cfl_factor,
            record_plane_z=cfg.record_plane_z,
            record_xy=cfg.record_xy,
            record_stride=cfg.record_stride,
            boundary_subgrid=cfg.boundary_subgrid,
            laplace_s=cfg.laplace_s,
            snapshot_stride=cfg.snapshot_stride,
        )
        _HOMOGENEOUS_CACHE[key] = run_forward(homog)
    return _HOMOGENEOUS_CACHE[key]


def clear_homogeneous_cache():
    _HOMOGENEOUS_CACHE.clear()


def first_arrival_time(trace, dt, threshold=0.01):
    """First time |u| exceeds threshold * max|u|; nan for an all-zero trace."""
    trace = np.asarray(trace)
    peak = np.max(np.abs(trace))
    if peak == 0:
        return float("nan")
    idx = np.argmax(np.abs(trace) >= threshold * peak)
    return float(idx * dt)
