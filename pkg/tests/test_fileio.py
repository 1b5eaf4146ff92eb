import numpy as np
import pytest

from wavecip import fileio
from wavecip.grids import Grid2, ScalarField3, TraceCube, grid_from_bounds
from wavecip.spectral import PseudoFreqSeries
from wavecip.validation import ValidationError


@pytest.fixture
def field():
    g = grid_from_bounds((-0.1, 0.0, 0.5), (0.1, 0.2, 0.7), (0.05, 0.05, 0.05))
    rng = np.random.default_rng(7)
    return ScalarField3(g, rng.normal(size=g.shape))


def test_structured_points_round_trip(field, tmp_path):
    path = tmp_path / "field.vtk"
    fileio.write_structured_points(field, path, name="epsilon")
    back = fileio.read_structured_points(path)
    assert back.grid == field.grid
    assert np.allclose(back.values, field.values, rtol=0, atol=1e-15)


def test_structured_points_layout_x_fastest(field, tmp_path):
    path = tmp_path / "field.vtk"
    fileio.write_structured_points(field, path)
    body = path.read_text().splitlines()
    start = body.index("LOOKUP_TABLE default") + 1
    flat = np.array(" ".join(body[start:]).split(), dtype=float)
    # the first run of values must walk the x axis at fixed (y, z)
    assert np.allclose(flat[: field.grid.counts[0]], field.values[:, 0, 0])


def test_field_csv_has_coordinates(field, tmp_path):
    path = tmp_path / "field.csv"
    fileio.field_to_csv(field, path)
    rows = np.genfromtxt(path, delimiter=",", names=True)
    assert rows.size == field.grid.n_nodes
    k = np.lexsort((rows["k"], rows["j"], rows["i"]))
    values = rows["value"][k].reshape(field.grid.shape)
    assert np.allclose(values, field.values)
    assert rows["x"].min() == pytest.approx(-0.1)


def test_trace_cube_round_trip(tmp_path):
    grid = Grid2((-0.5, -0.4), (0.02, 0.025), (11, 9))
    cube = TraceCube(0.8, grid, 0.003, np.random.default_rng(3).normal(size=(11, 9, 21)))
    path = tmp_path / "cube.trcb"
    fileio.write_trace_cube(cube, path)
    back = fileio.read_trace_cube(path)
    assert back.plane_z == cube.plane_z
    assert back.xy_grid == cube.xy_grid
    assert back.dt == cube.dt
    assert np.array_equal(back.traces, cube.traces)


def test_trace_cube_header_magic(tmp_path):
    path = tmp_path / "cube.trcb"
    grid = Grid2((0, 0), (1, 1), (2, 2))
    fileio.write_trace_cube(TraceCube(0.0, grid, 1.0, np.zeros((2, 2, 3))), path)
    assert path.read_bytes()[:4] == b"TRCB"
    bad = tmp_path / "bad.trcb"
    bad.write_bytes(b"NOPE" + path.read_bytes()[4:])
    with pytest.raises(ValidationError):
        fileio.read_trace_cube(bad)


def test_series_csv_round_trip(tmp_path):
    grid = Grid2((-0.5, -0.5), (0.02, 0.02), (6, 5))
    s_values = np.array([10.0, 9.95, 9.9])
    series = PseudoFreqSeries(grid, s_values,
                              np.random.default_rng(5).normal(size=(6, 5, 3)))
    path = tmp_path / "series.csv"
    fileio.series_to_csv(series, path)
    back = fileio.series_from_csv(path)
    assert np.allclose(back.s_values, series.s_values)
    assert np.allclose(back.values, series.values)
