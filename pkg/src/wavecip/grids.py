"""Uniform Cartesian grids, scalar fields and detector-plane trace storage.

All quantities are dimensionless: lengths are in meters divided by 1 m,
times are nanoseconds times 0.3 (the free-space speed of light in m/ns),
so the wave speed of the homogeneous background is exactly 1.
"""

from dataclasses import dataclass

import numpy as np

from .validation import (
    ValidationError,
    check_counts,
    check_finite,
    check_positive,
    check_vector3,
)


@dataclass(frozen=True)
class UnitSystem:
    """Conversion between laboratory units and the dimensionless system."""

    length_scale: float = 1.0  # meters per dimensionless length unit
    time_scale: float = 0.3    # dimensionless time per nanosecond

    def time_from_ns(self, t_ns):
        return np.asarray(t_ns, dtype=float) * self.time_scale

    def length_from_m(self, x_m):
        return np.asarray(x_m, dtype=float) / self.length_scale

    @property
    def wave_speed(self):
        # free space: 0.3 m/ns divided by (length_scale * time_scale / ns)
        return 0.3 * (1.0 / self.length_scale) / self.time_scale


@dataclass(frozen=True)
class Grid2:
    """Uniform 2-D grid on a plane (used for detector arrays and boundary faces)."""

    origin: tuple
    spacing: tuple
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "counts", check_counts(self.counts, "counts", minimum=1, ndim=2))
        check_positive(self.spacing, "spacing")

    def axis(self, d):
        return self.origin[d] + self.spacing[d] * np.arange(self.counts[d])

    @property
    def shape(self):
        return self.counts

    def meshgrid(self):
        return np.meshgrid(self.axis(0), self.axis(1), indexing="ij")

    def bounds(self, d):
        return self.origin[d], self.origin[d] + self.spacing[d] * (self.counts[d] - 1)

    def cell_area(self):
        return self.spacing[0] * self.spacing[1]


@dataclass(frozen=True)
class Grid3:
    """Uniform 3-D Cartesian grid; node (i,j,k) sits at origin + index*spacing."""

    origin: tuple
    spacing: tuple
    counts: tuple

    def __post_init__(self):
        origin = check_vector3(self.origin, "origin")
        spacing = check_vector3(self.spacing, "spacing")
        check_positive(spacing, "spacing")
        object.__setattr__(self, "origin", tuple(float(v) for v in origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in spacing))
        object.__setattr__(self, "counts", check_counts(self.counts, "counts", minimum=2))

    @property
    def shape(self):
        return self.counts

    @property
    def n_nodes(self):
        nx, ny, nz = self.counts
        return nx * ny * nz

    def axis(self, d):
        return self.origin[d] + self.spacing[d] * np.arange(self.counts[d])

    def point(self, i, j, k):
        ox, oy, oz = self.origin
        hx, hy, hz = self.spacing
        return np.array([ox + i * hx, oy + j * hy, oz + k * hz])

    def index_of(self, point, tol=1e-9):
        """Exact inverse of :meth:`point`; raises if not on a node."""
        rel = (np.asarray(point, dtype=float) - np.asarray(self.origin)) / np.asarray(self.spacing)
        idx = np.rint(rel).astype(int)
        if np.any(np.abs(rel - idx) > tol) or np.any(idx < 0) or np.any(idx >= self.counts):
            raise ValidationError(f"point {point} is not a node of this grid")
        return tuple(int(v) for v in idx)

    def bounds(self, d):
        return self.origin[d], self.origin[d] + self.spacing[d] * (self.counts[d] - 1)

    def contains_box(self, other, tol=1e-9):
        return all(
            self.bounds(d)[0] - tol <= other.bounds(d)[0]
            and other.bounds(d)[1] <= self.bounds(d)[1] + tol
            for d in range(3)
        )

    def face_grid(self, face):
        """2-D grid of one of the six faces: 'x-','x+','y-','y+','z-','z+'."""
        axis = {"x": 0, "y": 1, "z": 2}[face[0]]
        keep = [d for d in range(3) if d != axis]
        return Grid2(
            origin=(self.origin[keep[0]], self.origin[keep[1]]),
            spacing=(self.spacing[keep[0]], self.spacing[keep[1]]),
            counts=(self.counts[keep[0]], self.counts[keep[1]]),
        )

    def face_coordinate(self, face):
        axis = {"x": 0, "y": 1, "z": 2}[face[0]]
        return self.bounds(axis)[0] if face[1] == "-" else self.bounds(axis)[1]

    def cell_volume(self):
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    def xy_grid(self):
        return Grid2(self.origin[:2], self.spacing[:2], self.counts[:2])


FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


def make_grid(origin, spacing, counts):
    """Build a validated Grid3; rejects non-positive spacing or counts < 2."""
    return Grid3(tuple(origin), tuple(spacing), tuple(counts))


def grid_from_bounds(lo, hi, spacing):
    """Grid covering [lo, hi] per axis; extents must be multiples of the spacing."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    n_cells = (hi - lo) / spacing
    counts = np.rint(n_cells).astype(int)
    if np.any(np.abs(n_cells - counts) > 1e-8 * np.maximum(1, np.abs(n_cells))):
        raise ValidationError(f"extent {hi - lo} is not a multiple of spacing {spacing}")
    return Grid3(tuple(lo), tuple(spacing), tuple(counts + 1))


@dataclass(frozen=True)
class ScalarField3:
    """A scalar quantity sampled on a Grid3, stored dense with z fastest."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValidationError(
                f"values shape {values.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)

    def copy(self):
        return ScalarField3(self.grid, self.values.copy())

    def max(self):
        return float(self.values.max())

    def min(self):
        return float(self.values.min())


def constant_field(grid, value):
    return ScalarField3(grid, np.full(grid.shape, float(value)))


@dataclass(frozen=True)
class TraceCube:
    """Time traces u(x, y, t) recorded on a planar detector array."""

    plane_z: float
    xy_grid: Grid2
    dt: float
    traces: np.ndarray

    def __post_init__(self):
        traces = np.asarray(self.traces, dtype=float)
        if traces.ndim != 3 or traces.shape[:2] != tuple(self.xy_grid.counts):
            raise ValidationError(
                f"traces shape {traces.shape} does not match detector grid {self.xy_grid.counts}"
            )
        if self.dt <= 0 or traces.shape[2] < 1:
            raise ValidationError("dt must be > 0 and n_samples >= 1")
        check_finite(traces, "traces")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "plane_z", float(self.plane_z))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_samples(self):
        return self.traces.shape[2]

    @property
    def times(self):
        return self.dt * np.arange(self.n_samples)

    def with_traces(self, traces):
        return TraceCube(self.plane_z, self.xy_grid, self.dt, traces)


# ---------------------------------------------------------------------------
# interpolation


def _axis_weights(src_axis_origin, src_spacing, src_count, targets):
    """Clamped linear-interpolation index/weight pairs along one axis."""
    rel = (np.asarray(targets, dtype=float) - src_axis_origin) / src_spacing
    if rel.min() < -1e-9 or rel.max() > src_count - 1 + 1e-9:
        raise ValidationError("target points fall outside the source grid footprint")
    i0 = np.clip(np.floor(rel).astype(int), 0, src_count - 2)
    w = rel - i0
    # snap to nodes so coincident grids reproduce values exactly
    nearest = np.rint(rel)
    near_node = np.abs(rel - nearest) < 1e-12
    node = np.clip(nearest.astype(int), 0, src_count - 1)
    i0 = np.where(near_node, np.minimum(node, src_count - 2), i0)
    w = np.where(near_node, np.where(node == src_count - 1, 1.0, 0.0), w)
    return i0, w


def restrict_to_subdomain(field, sub):
    """Trilinear interpolation of a field onto a sub-grid inside its box."""
    if not field.grid.contains_box(sub):
        raise ValidationError("subdomain box exceeds the field's box")
    g = field.grid
    ix, wx = _axis_weights(g.origin[0], g.spacing[0], g.counts[0], sub.axis(0))
    iy, wy = _axis_weights(g.origin[1], g.spacing[1], g.counts[1], sub.axis(1))
    iz, wz = _axis_weights(g.origin[2], g.spacing[2], g.counts[2], sub.axis(2))
    v = field.values
    wx = wx[:, None, None]
    wy = wy[None, :, None]
    wz = wz[None, None, :]

    def gather(dx, dy, dz):
        return v[np.ix_(ix + dx, iy + dy, iz + dz)]

    out = (
        gather(0, 0, 0) * (1 - wx) * (1 - wy) * (1 - wz)
        + gather(1, 0, 0) * wx * (1 - wy) * (1 - wz)
        + gather(0, 1, 0) * (1 - wx) * wy * (1 - wz)
        + gather(1, 1, 0) * wx * wy * (1 - wz)
        + gather(0, 0, 1) * (1 - wx) * (1 - wy) * wz
        + gather(1, 0, 1) * wx * (1 - wy) * wz
        + gather(0, 1, 1) * (1 - wx) * wy * wz
        + gather(1, 1, 1) * wx * wy * wz
    )
    return ScalarField3(sub, out)


def bilinear_resample_xy(values, src_grid, target_grid):
    """Bilinear (x, y) resampling of an (nx, ny, ...) array onto a target grid."""
    ix, wx = _axis_weights(src_grid.origin[0], src_grid.spacing[0], src_grid.counts[0],
                           target_grid.axis(0))
    iy, wy = _axis_weights(src_grid.origin[1], src_grid.spacing[1], src_grid.counts[1],
                           target_grid.axis(1))
    extra = (1,) * (values.ndim - 2)
    wx = wx.reshape(-1, 1, *extra)
    wy = wy.reshape(1, -1, *extra)
    out = (
        values[np.ix_(ix, iy)] * (1 - wx) * (1 - wy)
        + values[np.ix_(ix + 1, iy)] * wx * (1 - wy)
        + values[np.ix_(ix, iy + 1)] * (1 - wx) * wy
        + values[np.ix_(ix + 1, iy + 1)] * wx * wy
    )
    return out


def bilinear_resample_plane(cube, target_xy):
    """Per-time-sample bilinear interpolation of a trace cube in (x, y)."""
    out = bilinear_resample_xy(cube.traces, cube.xy_grid, target_xy)
    return TraceCube(cube.plane_z, target_xy, cube.dt, out)


# ---------------------------------------------------------------------------
# discrete calculus on fields (second order, one-sided at the boundary)


def gradient(values, spacing):
    """Component-wise second-order gradient of a 3-D array."""
    return [np.gradient(values, spacing[d], axis=d, edge_order=2) for d in range(3)]


def laplacian(values, spacing):
    """Second-order 7-point Laplacian; one-sided second differences at faces."""
    out = np.zeros_like(values)
    for d in range(3):
        h2 = spacing[d] * spacing[d]
        v = np.moveaxis(values, d, 0)
        o = np.moveaxis(out, d, 0)
        o[1:-1] += (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h2
        # one-sided second derivative, O(h^2)
        o[0] += (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
        o[-1] += (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h2
    return out


def l2_norm(values, cell_measure):
    """Discrete L2 norm with constant cell measure (volume or area)."""
    return float(np.sqrt(np.sum(np.asarray(values) ** 2) * cell_measure))
