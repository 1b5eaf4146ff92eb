"""Time-reversal transport of measured traces from the measurement plane down
to a propagation plane close to the targets.

The recorded scattered wave is reversed in time and re-emitted as Dirichlet
data on the measurement plane of a homogeneous slab; the slab bottom absorbs
the reversed wave ("sending back" the original), the sides carry zero Neumann
data and both initial conditions vanish. Re-reversing the recorded plane
yields the scattered wave near the targets.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .grids import TraceCube
from .spectral import check_decayed
from .validation import ValidationError

log = logging.getLogger(__name__)


@dataclass
class PropagationInfo:
    """Diagnostics of one reversal run, including the measured stability ratio."""

    input_norm: float = 0.0
    output_norm: float = 0.0
    stability_ratio: float = 0.0
    substeps: int = 1

    def to_dict(self):
        return {
            "input_norm": self.input_norm,
            "output_norm": self.output_norm,
            "stability_ratio": self.stability_ratio,
            "substeps": self.substeps,
        }


def _h2_norm_surface(traces, dt, hx, hy):
    """Discrete H2-type norm of g on the measurement plane times (0, T)."""
    total = np.sum(traces**2)
    for axis, h in ((0, hx), (1, hy), (2, dt)):
        d1 = np.diff(traces, axis=axis) / h
        d2 = np.diff(traces, n=2, axis=axis) / (h * h)
        total += np.sum(d1**2) + np.sum(d2**2)
    return float(np.sqrt(total * hx * hy * dt))


def time_reverse_propagate(
    cube,
    bottom_z,
    output_plane_z,
    z_spacing=None,
    cfl_factor=0.9,
    stability_report=False,
    require_decayed=True,
):
    """Propagate measured traces from ``cube.plane_z`` down to ``output_plane_z``.

    Parameters
    ----------
    cube : TraceCube
        Scattered-wave traces on the measurement plane, supported in (0, T)
        with a decayed tail.
    bottom_z : float
        Bottom of the reversal slab; must satisfy bottom_z < output_plane_z.
    output_plane_z : float
        Plane on which the propagated wave is returned.
    z_spacing : float, optional
        Vertical grid step of the slab (defaults to the lateral spacing);
        short recorded pulses need a finer step than the detector pitch.
    stability_report : bool
        Accumulate the discrete H1 norm of the reversed field and report the
        ratio against the H2-type norm of the input data.
    """
    if not bottom_z < output_plane_z < cube.plane_z:
        raise ValidationError("need bottom_z < output_plane_z < measurement plane")
    if require_decayed and not check_decayed(cube.traces):
        raise ValidationError(
            "measured traces have not decayed at the end of the window; "
            "extend the record or window the data first"
        )

    hx, hy = cube.xy_grid.spacing
    hz = z_spacing if z_spacing is not None else hx
    span = cube.plane_z - bottom_z
    nz_cells = int(round(span / hz))
    if abs(span - nz_cells * hz) > 1e-9:
        raise ValidationError(f"slab depth {span} is not a multiple of the spacing {hz}")
    nz = nz_cells + 1
    k_out = int(round((output_plane_z - bottom_z) / hz))
    if abs(bottom_z + k_out * hz - output_plane_z) > 1e-9:
        raise ValidationError("output plane does not lie on a grid plane")

    # the recorded sampling usually satisfies the CFL bound already; subdivide if not
    limit = cfl_factor * min(hx, hy, hz) / np.sqrt(3.0)
    substeps = max(1, int(np.ceil(cube.dt / limit)))
    dt = cube.dt / substeps

    nx, ny = cube.xy_grid.counts
    nt = cube.n_samples
    n_steps = (nt - 1) * substeps

    reversed_data = cube.traces[:, :, ::-1]

    def dirichlet(step):
        j, frac = divmod(step, substeps)
        if frac == 0:
            return reversed_data[:, :, j]
        w = frac / substeps
        return (1 - w) * reversed_data[:, :, j] + w * reversed_data[:, :, j + 1]

    cx, cy, cz = (dt / hx) ** 2, (dt / hy) ** 2, (dt / hz) ** 2
    alpha_bot = dt / hz

    pad_prev = np.zeros((nx + 2, ny + 2, nz + 2))
    pad_curr = np.zeros((nx + 2, ny + 2, nz + 2))
    u_prev = pad_prev[1:-1, 1:-1, 1:-1]
    u_curr = pad_curr[1:-1, 1:-1, 1:-1]
    u_curr[:, :, -1] = dirichlet(0)

    recorded = np.zeros((nx, ny, nt))
    recorded[:, :, 0] = u_curr[:, :, k_out]

    h1_accum = 0.0

    for m in range(n_steps):
        pad_curr[0, :, :] = pad_curr[2, :, :]
        pad_curr[-1, :, :] = pad_curr[-3, :, :]
        pad_curr[:, 0, :] = pad_curr[:, 2, :]
        pad_curr[:, -1, :] = pad_curr[:, -3, :]
        pad_curr[:, :, 0] = pad_curr[:, :, 2]
        pad_curr[:, :, -1] = pad_curr[:, :, -3]  # unused at the Dirichlet face

        lap = cx * (pad_curr[2:, 1:-1, 1:-1] + pad_curr[:-2, 1:-1, 1:-1])
        lap += cy * (pad_curr[1:-1, 2:, 1:-1] + pad_curr[1:-1, :-2, 1:-1])
        lap += cz * (pad_curr[1:-1, 1:-1, 2:] + pad_curr[1:-1, 1:-1, :-2])
        lap -= (2.0 * (cx + cy + cz)) * u_curr

        u_next = 2.0 * u_curr - u_prev + lap
        u_next[:, :, 0] = (
            2.0 * u_curr[:, :, 0]
            - (1.0 - alpha_bot) * u_prev[:, :, 0]
            + lap[:, :, 0]
        ) / (1.0 + alpha_bot)
        u_next[:, :, -1] = dirichlet(m + 1)

        if stability_report and (m + 1) % substeps == 0:
            du = (u_next - u_curr) / dt
            gx = np.diff(u_next, axis=0) / hx
            gy = np.diff(u_next, axis=1) / hy
            gz = np.diff(u_next, axis=2) / hz
            h1_accum += (
                np.sum(u_next**2) + np.sum(du**2)
                + np.sum(gx**2) + np.sum(gy**2) + np.sum(gz**2)
            ) * hx * hy * hz * cube.dt

        pad_prev, pad_curr = pad_curr, pad_prev
        u_prev = pad_prev[1:-1, 1:-1, 1:-1]
        u_curr = pad_curr[1:-1, 1:-1, 1:-1]
        u_curr[:] = u_next

        if (m + 1) % substeps == 0:
            recorded[:, :, (m + 1) // substeps] = u_curr[:, :, k_out]

    # back to physical time: u_s(x, t) ~ u_r(x, T - t)
    out = TraceCube(output_plane_z, cube.xy_grid, cube.dt, recorded[:, :, ::-1].copy())

    info = PropagationInfo(substeps=substeps)
    if stability_report:
        info.input_norm = _h2_norm_surface(cube.traces, cube.dt, hx, hy)
        info.output_norm = float(np.sqrt(h1_accum))
        info.stability_ratio = (
            info.output_norm / info.input_norm if info.input_norm > 0 else 0.0
        )
        log.info("time reversal stability ratio %.3f", info.stability_ratio)
    return out, info
