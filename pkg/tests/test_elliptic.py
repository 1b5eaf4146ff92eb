import numpy as np
import pytest
from scipy.integrate import quad

from wavecip.elliptic import (
    EllipticProblem,
    EllipticSolveError,
    carleman_coefficients,
    solve_elliptic,
    solve_laplace,
)
from wavecip.grids import grid_from_bounds
from wavecip.spectral import PseudoFreqGrid
from wavecip.validation import ValidationError


def quadrature_coefficients(n, grid, lam):
    """Independent oracle: adaptive quadrature of the defining weighted integrals.

    The layer equation comes from substituting the piecewise-constant q into
    the differential integral equation, whose s-integral over (s, s_bar)
    splits as (s_{n-1} - s) grad(q_n) + grad(qbar_{n-1}); weighting by
    exp[lam (s - s_{n-1})] and normalizing the Laplacian to coefficient one
    yields the three coefficient integrals below.
    """
    s_n, s_prev = grid.layer_bounds(n)
    w = lambda s: np.exp(lam * (s - s_prev))
    i0 = quad(w, s_n, s_prev, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    a1 = quad(lambda s: 2 * (s * s - 2 * s * (s_prev - s)) * w(s), s_n, s_prev,
              epsabs=1e-14, epsrel=1e-13, limit=200)[0] / i0
    a2 = quad(lambda s: 2 * (s * s * (s_prev - s) - s * (s_prev - s) ** 2) * w(s),
              s_n, s_prev, epsabs=1e-14, epsrel=1e-13, limit=200)[0] / i0
    a3 = quad(lambda s: -2 * s * w(s), s_n, s_prev,
              epsabs=1e-14, epsrel=1e-13, limit=200)[0] / i0
    return a1, a2, a3


class TestCarlemanCoefficients:
    def test_closed_forms_match_quadrature(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            step = float(rng.uniform(0.02, 0.2))
            n_layers = int(rng.integers(1, 20))
            grid = PseudoFreqGrid(10.0 - n_layers * step, 10.0, step)
            n = int(rng.integers(1, grid.n_layers + 1))
            lam = float(rng.uniform(5.0, 50.0))
            c = carleman_coefficients(n, grid, lam)
            a1, a2, a3 = quadrature_coefficients(n, grid, lam)
            assert c.a1 == pytest.approx(a1, abs=1e-10 * max(1, abs(a1)))
            assert c.a2 == pytest.approx(a2, abs=1e-10 * max(1, abs(a2)))
            assert c.a3 == pytest.approx(a3, abs=1e-10 * max(1, abs(a3)))

    def test_large_lambda_concentrates_at_layer_top(self):
        grid = PseudoFreqGrid(8.0, 10.0, 0.05)
        for n in (1, 20, 40):
            _, s_prev = grid.layer_bounds(n)
            c = carleman_coefficients(n, grid, 1e4)
            assert c.a1 == pytest.approx(2 * s_prev**2, rel=1e-3)
            assert c.a3 == pytest.approx(-2 * s_prev, rel=1e-3)
            # A2 decays like 2 s_{n-1}^2 / lambda
            assert c.a2 == pytest.approx(2 * s_prev**2 / 1e4, rel=0.05)

    def test_a2_magnitude_decreases_with_lambda(self):
        grid = PseudoFreqGrid(8.0, 10.0, 0.05)
        for n in range(1, grid.n_layers + 1):
            a2 = [abs(carleman_coefficients(n, grid, lam).a2) for lam in (10.0, 20.0, 40.0)]
            assert a2[2] < a2[1] < a2[0]

    def test_a2_dominated_at_reference_lambda(self):
        grid = PseudoFreqGrid(8.0, 10.0, 0.05)
        c = carleman_coefficients(1, grid, 20.0)
        assert abs(c.a2) < 0.05 * abs(c.a1)

    def test_rejects_nonpositive_lambda(self):
        grid = PseudoFreqGrid(8.0, 10.0, 0.05)
        with pytest.raises(ValidationError):
            carleman_coefficients(1, grid, 0.0)


def _mms_error(n_cells, convection):
    grid = grid_from_bounds((0, 0, 0), (1, 1, 1), (1.0 / n_cells,) * 3)
    xs, ys, zs = np.meshgrid(grid.axis(0), grid.axis(1), grid.axis(2), indexing="ij")
    exact = np.sin(np.pi * xs) * np.sin(np.pi * ys) * np.sin(np.pi * zs)
    rhs = -3 * np.pi**2 * exact
    b = None
    if convection is not None:
        gx = np.pi * np.cos(np.pi * xs) * np.sin(np.pi * ys) * np.sin(np.pi * zs)
        gy = np.pi * np.sin(np.pi * xs) * np.cos(np.pi * ys) * np.sin(np.pi * zs)
        gz = np.pi * np.sin(np.pi * xs) * np.sin(np.pi * ys) * np.cos(np.pi * zs)
        bx, by, bz = convection
        rhs = rhs + bx * gx + by * gy + bz * gz
        b = (np.full(grid.shape, bx), np.full(grid.shape, by), np.full(grid.shape, bz))
    problem = EllipticProblem(grid=grid, rhs=rhs, dirichlet=exact.copy(), convection=b)
    solution = solve_elliptic(problem)
    return float(np.sqrt(np.mean((solution - exact) ** 2)))


@pytest.mark.parametrize("convection", [None, (1.0, 0.0, 0.0)])
def test_manufactured_solution_second_order(convection):
    errors = [_mms_error(n, convection) for n in (12, 24, 48)]
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders > 1.9), f"orders {orders} below 2nd-order expectation"


def test_zero_problem_gives_zero():
    grid = grid_from_bounds((0, 0, 0), (1, 1, 1), (0.125,) * 3)
    problem = EllipticProblem(grid=grid, rhs=np.zeros(grid.shape),
                              dirichlet=np.zeros(grid.shape))
    assert np.all(solve_elliptic(problem) == 0.0)


def test_laplace_constant_boundary():
    grid = grid_from_bounds((0, 0, 0), (1, 1, 1), (0.1,) * 3)
    out = solve_laplace(grid, np.full(grid.shape, 3.7))
    assert np.allclose(out, 3.7, atol=1e-9)


def test_laplace_harmonic_polynomial():
    # x^2 - z^2 is harmonic and quadratic, so the 7-point stencil is exact
    grid = grid_from_bounds((-0.5, -0.5, -0.1), (0.5, 0.5, 0.04), (0.02,) * 3)
    xs, _, zs = np.meshgrid(grid.axis(0), grid.axis(1), grid.axis(2), indexing="ij")
    exact = xs**2 - zs**2
    out = solve_laplace(grid, exact.copy())
    assert np.max(np.abs(out - exact)) < 1e-7


def test_laplace_maximum_principle():
    grid = grid_from_bounds((0, 0, 0), (1, 1, 1), (0.1,) * 3)
    rng = np.random.default_rng(8)
    boundary = np.zeros(grid.shape)
    for axis in range(3):
        for side in (0, -1):
            idx = [slice(None)] * 3
            idx[axis] = side
            boundary[tuple(idx)] = rng.uniform(-2, 5, boundary[tuple(idx)].shape)
    out = solve_laplace(grid, boundary)
    interior = out[1:-1, 1:-1, 1:-1]
    assert interior.min() >= boundary.min() - 1e-9
    assert interior.max() <= boundary.max() + 1e-9


def test_high_peclet_falls_back_to_upwind():
    grid = grid_from_bounds((0, 0, 0), (1, 1, 1), (0.1,) * 3)
    b = (np.full(grid.shape, 50.0), np.zeros(grid.shape), np.zeros(grid.shape))
    problem = EllipticProblem(grid=grid, rhs=np.zeros(grid.shape),
                              dirichlet=np.zeros(grid.shape), convection=b)
    assert problem.max_cell_peclet() == pytest.approx(2.5)
    out = solve_elliptic(problem)  # upwind keeps this solvable and bounded
    assert np.max(np.abs(out)) < 1e-9


def test_residual_contract_reported():
    grid = grid_from_bounds((0, 0, 0), (1, 1, 1), (0.25,) * 3)
    problem = EllipticProblem(grid=grid, rhs=np.ones(grid.shape),
                              dirichlet=np.zeros(grid.shape))
    out = solve_elliptic(problem, rtol=1e-8)
    # apply the continuous operator at one interior node to confirm the residual
    h2 = 0.25**2
    lap = (
        out[1, 2, 2] + out[3, 2, 2] + out[2, 1, 2] + out[2, 3, 2]
        + out[2, 2, 1] + out[2, 2, 3] - 6 * out[2, 2, 2]
    ) / h2
    assert lap == pytest.approx(1.0, abs=1e-6)
