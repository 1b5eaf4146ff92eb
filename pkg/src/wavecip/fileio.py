"""Serialization: legacy structured-points ASCII, CSV tables and the TRCB container."""

import json
import struct

import numpy as np

from .grids import Grid2, Grid3, ScalarField3, TraceCube
from .validation import ValidationError

TRCB_MAGIC = b"TRCB"
TRCB_VERSION = 1
# little-endian: magic, version, plane_z, x0, y0, dx, dy, nx, ny, nt, dt
_TRCB_HEADER = struct.Struct("<4sI5d3Id")


def write_structured_points(field, path, name="values", title="wavecip field"):
    """Write a scalar field in the legacy ASCII structured-points format."""
    g = field.grid
    nx, ny, nz = g.counts
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET STRUCTURED_POINTS\n")
        f.write(f"DIMENSIONS {nx} {ny} {nz}\n")
        f.write(f"ORIGIN {g.origin[0]:.17g} {g.origin[1]:.17g} {g.origin[2]:.17g}\n")
        f.write(f"SPACING {g.spacing[0]:.17g} {g.spacing[1]:.17g} {g.spacing[2]:.17g}\n")
        f.write(f"POINT_DATA {nx * ny * nz}\n")
        f.write(f"SCALARS {name} double 1\n")
        f.write("LOOKUP_TABLE default\n")
        # legacy layout: x varies fastest, z slowest
        flat = np.transpose(field.values, (2, 1, 0)).reshape(-1)
        for start in range(0, flat.size, 6):
            f.write(" ".join(f"{v:.17g}" for v in flat[start:start + 6]) + "\n")


def read_structured_points(path):
    """Read back a field written by :func:`write_structured_points`."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    header = {}
    data_start = None
    for idx, ln in enumerate(lines):
        up = ln.upper()
        if up.startswith("DIMENSIONS"):
            header["counts"] = tuple(int(v) for v in ln.split()[1:4])
        elif up.startswith("ORIGIN"):
            header["origin"] = tuple(float(v) for v in ln.split()[1:4])
        elif up.startswith("SPACING"):
            header["spacing"] = tuple(float(v) for v in ln.split()[1:4])
        elif up.startswith("LOOKUP_TABLE"):
            data_start = idx + 1
    if data_start is None or "counts" not in header:
        raise ValidationError(f"{path} is not a structured-points file")
    values = np.array(" ".join(lines[data_start:]).split(), dtype=float)
    nx, ny, nz = header["counts"]
    grid = Grid3(header["origin"], header["spacing"], header["counts"])
    return ScalarField3(grid, values.reshape(nz, ny, nx).transpose(2, 1, 0))


def field_to_csv(field, path):
    """Flat CSV dump (i, j, k, x, y, z, value)."""
    g = field.grid
    with open(path, "w") as f:
        f.write("i,j,k,x,y,z,value\n")
        xs, ys, zs = g.axis(0), g.axis(1), g.axis(2)
        for i in range(g.counts[0]):
            for j in range(g.counts[1]):
                for k in range(g.counts[2]):
                    f.write(f"{i},{j},{k},{xs[i]:.17g},{ys[j]:.17g},{zs[k]:.17g},"
                            f"{field.values[i, j, k]:.17g}\n")


def write_trace_cube(cube, path):
    """Binary container: TRCB header followed by float64 samples in (i, j, t) order."""
    nx, ny = cube.xy_grid.counts
    header = _TRCB_HEADER.pack(
        TRCB_MAGIC, TRCB_VERSION, cube.plane_z,
        cube.xy_grid.origin[0], cube.xy_grid.origin[1],
        cube.xy_grid.spacing[0], cube.xy_grid.spacing[1],
        nx, ny, cube.n_samples, cube.dt,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(cube.traces, dtype="<f8").tobytes())


def read_trace_cube(path):
    with open(path, "rb") as f:
        raw = f.read(_TRCB_HEADER.size)
        magic, version, plane_z, x0, y0, dx, dy, nx, ny, nt, dt = _TRCB_HEADER.unpack(raw)
        if magic != TRCB_MAGIC:
            raise ValidationError(f"{path} is not a TRCB container")
        if version != TRCB_VERSION:
            raise ValidationError(f"unsupported TRCB version {version}")
        data = np.frombuffer(f.read(nx * ny * nt * 8), dtype="<f8").reshape(nx, ny, nt)
    grid = Grid2((x0, y0), (dx, dy), (nx, ny))
    return TraceCube(plane_z, grid, dt, data.copy())


def series_to_csv(series, path):
    """PseudoFreqSeries as CSV rows (x, y, s, value)."""
    xs, ys = series.xy_grid.axis(0), series.xy_grid.axis(1)
    with open(path, "w") as f:
        f.write("x,y,s,value\n")
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                for m, s in enumerate(series.s_values):
                    f.write(f"{x:.17g},{y:.17g},{s:.17g},{series.values[i, j, m]:.17g}\n")


def series_from_csv(path):
    from .spectral import PseudoFreqSeries

    data = np.genfromtxt(path, delimiter=",", names=True)
    xs = np.unique(data["x"])
    ys = np.unique(data["y"])
    ss = np.unique(data["s"])
    values = np.full((xs.size, ys.size, ss.size), np.nan)
    ix = np.searchsorted(xs, data["x"])
    iy = np.searchsorted(ys, data["y"])
    im = np.searchsorted(ss, data["s"])
    values[ix, iy, im] = data["value"]
    if np.any(np.isnan(values)):
        raise ValidationError(f"{path} does not cover a full (x, y, s) grid")
    if xs.size > 1 and ys.size > 1:
        spacing = (xs[1] - xs[0], ys[1] - ys[0])
    else:
        spacing = (1.0, 1.0)
    grid = Grid2((xs[0], ys[0]), spacing, (xs.size, ys.size))
    # CSV sorts s ascending; keep the series' own convention (descending grid)
    return PseudoFreqSeries(grid, ss[::-1].copy(), values[:, :, ::-1].copy())


def points_to_csv(points, path, header="x,y"):
    with open(path, "w") as f:
        f.write(header + "\n")
        for row in np.atleast_2d(points):
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)
