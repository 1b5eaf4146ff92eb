"""Sparse elliptic solves on the inversion box plus the per-layer weight coefficients.

Two problems are handled by one assembler: the pure Laplace problem for the
first tail and the convection-diffusion problem for each layer unknown q_n.
The convective field and the right-hand side come from the layer's weight
coefficients, which are closed-form moments of the exponential weight
exp[lambda * (s - s_{n-1})] over the layer (s_n, s_{n-1}).
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .validation import ValidationError, check_finite

log = logging.getLogger(__name__)


class EllipticSolveError(RuntimeError):
    """Raised when the linear solve misses its residual contract."""


@dataclass(frozen=True)
class CarlemanCoefficients:
    """Per-layer coefficients of the weighted elliptic system."""

    layer: int
    lam: float
    a1: float
    a2: float  # computed but dropped from the solve; its size gauges the ignored term
    a3: float


def _weight_moments(lam, h):
    """Moments M_k = integral of t^k exp(-lam t) over (0, h), k = 0..3."""
    x = lam * h
    e = np.exp(-x)
    m0 = (1.0 - e) / lam
    m1 = (1.0 - e * (1.0 + x)) / lam**2
    m2 = (2.0 - e * (x * x + 2.0 * x + 2.0)) / lam**3
    m3 = (6.0 - e * (x**3 + 3.0 * x * x + 6.0 * x + 6.0)) / lam**4
    return m0, m1, m2, m3


def carleman_coefficients(n, grid, lam):
    """Closed-form A_{1,n}, A_{2,n}, A_{3,n} for layer n of a pseudo-frequency grid.

    Obtained by substituting the piecewise-constant q into the differential
    integral equation for q, integrating against exp[lam (s - s_{n-1})] over
    (s_n, s_{n-1}) and normalizing the Laplacian term to unit coefficient.
    With a := s_{n-1} and M_k the weight moments above:

        A1 = 2 (a^2 M0 - 4 a M1 + 3 M2) / M0
        A2 = 2 (a^2 M1 - 3 a M2 + 2 M3) / M0
        A3 = -2 (a M0 - M1) / M0

    As lam grows the weight concentrates at s_{n-1}: A1 -> 2 a^2, A3 -> -2 a
    and A2 -> 0 like 1/lam, which is why the A2 term is dropped in the solve.
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    s_n, s_prev = grid.layer_bounds(n)
    h = s_prev - s_n
    a = s_prev
    m0, m1, m2, m3 = _weight_moments(lam, h)
    a1 = 2.0 * (a * a * m0 - 4.0 * a * m1 + 3.0 * m2) / m0
    a2 = 2.0 * (a * a * m1 - 3.0 * a * m2 + 2.0 * m3) / m0
    a3 = -2.0 * (a * m0 - m1) / m0
    return CarlemanCoefficients(layer=n, lam=float(lam), a1=a1, a2=a2, a3=a3)


@dataclass
class EllipticProblem:
    """Dirichlet problem  lap(q) + b . grad(q) = rhs  on a Grid3 box.

    ``convection`` is None or three full-grid arrays (b_x, b_y, b_z); ``rhs``
    and ``dirichlet`` are full-grid arrays, the latter read on the boundary only.
    """

    grid: object
    rhs: np.ndarray
    dirichlet: np.ndarray
    convection: tuple = None

    def __post_init__(self):
        shape = self.grid.shape
        self.rhs = check_finite(np.asarray(self.rhs, dtype=float), "rhs")
        self.dirichlet = check_finite(np.asarray(self.dirichlet, dtype=float), "dirichlet")
        if self.rhs.shape != shape or self.dirichlet.shape != shape:
            raise ValidationError("rhs/dirichlet must be full-grid arrays")
        if self.convection is not None:
            self.convection = tuple(
                check_finite(np.asarray(b, dtype=float), "convection") for b in self.convection
            )
            for b in self.convection:
                if b.shape != shape:
                    raise ValidationError("convection components must be full-grid arrays")

    def max_cell_peclet(self):
        if self.convection is None:
            return 0.0
        return max(
            float(np.max(np.abs(b))) * self.grid.spacing[d] / 2.0
            for d, b in enumerate(self.convection)
        )


def _assemble(problem, upwind):
    g = problem.grid
    nx, ny, nz = g.counts
    hx, hy, hz = g.spacing
    ni = (nx - 2, ny - 2, nz - 2)
    n_unknown = ni[0] * ni[1] * ni[2]

    ii, jj, kk = np.meshgrid(
        np.arange(1, nx - 1), np.arange(1, ny - 1), np.arange(1, nz - 1), indexing="ij"
    )
    flat = ((ii - 1) * ni[1] + (jj - 1)) * ni[2] + (kk - 1)
    flat = flat.ravel()

    diag = np.full(n_unknown, -2.0 / hx**2 - 2.0 / hy**2 - 2.0 / hz**2)
    rhs = problem.rhs[1:-1, 1:-1, 1:-1].ravel().copy()

    rows = [flat]
    cols = [flat]
    vals = [diag]

    index = (ii, jj, kk)
    spacings = (hx, hy, hz)
    for d in range(3):
        h = spacings[d]
        b = None
        if problem.convection is not None:
            b = problem.convection[d][1:-1, 1:-1, 1:-1].ravel()
        for sign in (-1, +1):
            coef = np.full(n_unknown, 1.0 / h**2)
            if b is not None:
                if upwind:
                    # first-order upwind keeps the matrix an M-matrix at high Peclet
                    if sign > 0:
                        coef += np.where(b < 0, b / h, 0.0)
                    else:
                        coef += np.where(b > 0, -b / h, 0.0)
                else:
                    coef += sign * b / (2.0 * h)
            neighbor = [arr.ravel().copy() for arr in index]
            neighbor[d] = neighbor[d] + sign
            on_boundary = (neighbor[d] == 0) | (neighbor[d] == g.counts[d] - 1)
            interior = ~on_boundary
            # boundary neighbors carry known Dirichlet data into the right-hand side
            bi = [c[on_boundary] for c in neighbor]
            rhs[flat[on_boundary]] -= coef[on_boundary] * problem.dirichlet[tuple(bi)]
            nb_flat = ((neighbor[0] - 1) * ni[1] + (neighbor[1] - 1)) * ni[2] + (neighbor[2] - 1)
            rows.append(flat[interior])
            cols.append(nb_flat[interior])
            vals.append(coef[interior])
        if b is not None and upwind:
            diag_update = np.zeros(n_unknown)
            diag_update += np.where(b > 0, b / h, 0.0)
            diag_update += np.where(b < 0, -b / h, 0.0)
            rows.append(flat)
            cols.append(flat)
            vals.append(-diag_update)

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    ).tocsr()
    return matrix, rhs


def solve_elliptic(problem, rtol=1e-8, maxiter=2000):
    """Solve the problem to a relative residual <= rtol; returns a full-grid array.

    A preconditioned BiCGStab is tried first; sparse LU is the fallback. The
    convection discretization switches from central to upwind differences when
    the cell Peclet number exceeds 1.
    """
    upwind = problem.max_cell_peclet() > 1.0
    if upwind:
        log.info("cell Peclet %.2f > 1: using upwind convection", problem.max_cell_peclet())
    matrix, rhs = _assemble(problem, upwind)
    scale = float(np.linalg.norm(rhs))
    if scale == 0.0:
        interior = np.zeros_like(rhs)
    else:
        interior = None
        try:
            ilu = spla.spilu(matrix.tocsc(), drop_tol=1e-5, fill_factor=12)
            precond = spla.LinearOperator(matrix.shape, ilu.solve)
            candidate, info = spla.bicgstab(
                matrix, rhs, rtol=min(rtol, 1e-9), atol=0.0, maxiter=maxiter, M=precond
            )
            if info == 0:
                interior = candidate
        except RuntimeError:
            log.info("ILU factorization failed; falling back to direct solve")
        if interior is None:
            interior = spla.spsolve(matrix, rhs)
        residual = float(np.linalg.norm(matrix @ interior - rhs)) / scale
        if residual > rtol:
            raise EllipticSolveError(
                f"linear solve residual {residual:.2e} above tolerance {rtol:.0e}"
            )

    g = problem.grid
    out = problem.dirichlet.copy()
    out[1:-1, 1:-1, 1:-1] = interior.reshape(g.counts[0] - 2, g.counts[1] - 2, g.counts[2] - 2)
    return out


def solve_laplace(grid, dirichlet, rtol=1e-8):
    """Discrete 7-point Laplace solve with Dirichlet boundary data."""
    problem = EllipticProblem(
        grid=grid, rhs=np.zeros(grid.shape), dirichlet=np.asarray(dirichlet, dtype=float)
    )
    return solve_elliptic(problem, rtol=rtol)


def solve_qn(problem, rtol=1e-8):
    """Solve one layer's convection-diffusion problem; alias kept for clarity."""
    return solve_elliptic(problem, rtol=rtol)
