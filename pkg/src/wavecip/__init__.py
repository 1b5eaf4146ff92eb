"""Reconstruction of spatially varying dielectric constants from backscattered waves."""

__version__ = "0.1.0"

from .grids import (
    Grid2,
    Grid3,
    ScalarField3,
    TraceCube,
    UnitSystem,
    bilinear_resample_plane,
    constant_field,
    grid_from_bounds,
    make_grid,
    restrict_to_subdomain,
)
from .spectral import PseudoFreqGrid, PseudoFreqSeries, laplace_transform, tail_from_w, v_of_w

__all__ = [
    "Grid2",
    "Grid3",
    "ScalarField3",
    "TraceCube",
    "UnitSystem",
    "PseudoFreqGrid",
    "PseudoFreqSeries",
    "bilinear_resample_plane",
    "constant_field",
    "grid_from_bounds",
    "laplace_transform",
    "make_grid",
    "restrict_to_subdomain",
    "tail_from_w",
    "v_of_w",
    "__version__",
]
