"""
Tests hepasim/elliptic.py
"""

import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import splu

from hepasim.elliptic import (
    EPS,
    conjugate_gradient,
    remove_mean,
    shifted_operator_norm,
    solve_aux,
    solve_shifted,
    solve_vstar,
    v_threshold,
)
from hepasim.exceptions import EmptyPortal, NoConvergence, SolvabilityViolated
from hepasim.functionals import linf_bound_ingredients
from hepasim.grid import (
    Grid,
    PortalSpec,
    ScalarField,
    build_chi,
    laplacian_matrix,
    laplacian_values,
    quadrature,
)
from hepasim.model import ModelParams


def cosine_source(grid: Grid) -> ScalarField:
    """1 + cos(pi x) cos(pi y), which integrates to one on the unit square."""
    return ScalarField.from_function(
        grid, lambda x, y: 1.0 + np.cos(np.pi * x) * np.cos(np.pi * y)
    )


def cosines(grid: Grid) -> np.ndarray:
    xx, yy = grid.centers()
    return np.cos(np.pi * xx) * np.cos(np.pi * yy)


def test_conjugate_gradient_matches_a_direct_solve():
    rng = np.random.default_rng(7)
    root = rng.normal(size=(6, 6))
    matrix = root @ root.T + 6.0 * np.eye(6)
    rhs = rng.normal(size=6)

    x, residual, iterations = conjugate_gradient(
        lambda v: matrix @ v, rhs, np.zeros(6), 1e-13, 100
    )

    assert residual <= 1e-13
    assert iterations <= 100
    assert x == pytest.approx(np.linalg.solve(matrix, rhs), abs=1e-11)


def test_conjugate_gradient_returns_a_converged_guess_untouched():
    x0 = np.array([1.0, 2.0])
    x, residual, iterations = conjugate_gradient(
        lambda v: 2.0 * v, 2.0 * x0, x0, 1e-12, 10
    )

    assert iterations == 0
    assert residual == 0.0
    assert np.array_equal(x, x0)


def test_no_convergence():
    grid = Grid(nx=32, ny=32)

    with pytest.raises(NoConvergence) as e:
        solve_shifted(cosine_source(grid), 0.01, 1.0, 1e-14, max_iters=2)

    assert e.value.max_iters == 2
    assert e.value.residual_norm > 1e-14


def test_shifted_solve_conserves_the_integral():
    grid = Grid(nx=16, ny=16)
    rhs = cosine_source(grid)
    solution = solve_shifted(rhs, 1.0, 0.05, 1e-12)

    assert quadrature(solution.field) == pytest.approx(quadrature(rhs), abs=1e-11)


def test_aux_solution_is_positive_and_has_the_right_mass():
    grid = Grid(nx=64, ny=64)
    params = ModelParams()
    chi = build_chi(grid, PortalSpec())

    solution = solve_aux(grid, chi, params)

    assert solution.residual_norm <= 1e-10
    assert solution.field.min() > 0.0
    assert params.eta * quadrature(solution.field) == pytest.approx(1.0, abs=1e-8)

    threshold = v_threshold(solution, chi.mask)
    assert 0.0 < threshold <= solution.field.max()


def test_threshold_over_an_empty_mask():
    grid = Grid(nx=8, ny=8)
    solution = solve_aux(grid, build_chi(grid, PortalSpec()), ModelParams())

    with pytest.raises(EmptyPortal):
        v_threshold(solution, np.zeros(grid.shape, dtype=bool))


def test_vstar_is_zero_mean_with_small_residual():
    grid = Grid(nx=64, ny=64)
    params = ModelParams()
    chi = build_chi(grid, PortalSpec())

    solution = solve_vstar(grid, chi, params)

    assert abs(float(solution.field.values.mean())) <= 1e-12
    assert solution.residual_norm <= 1e-10

    residual = (
        -params.beta * laplacian_values(solution.field.values, grid)
        - remove_mean(chi.values - 1.0 / grid.area)
    )
    assert float(np.max(np.abs(residual))) <= 1e-9


def test_vstar_needs_a_normalised_profile():
    grid = Grid(nx=8, ny=8)
    chi = build_chi(grid, PortalSpec())
    doubled = chi.with_values(2.0 * chi.values)

    with pytest.raises(SolvabilityViolated):
        solve_vstar(grid, doubled, ModelParams())


def test_vstar_vanishes_for_a_portal_covering_the_domain():
    grid = Grid(nx=16, ny=16)
    params = ModelParams()
    chi = build_chi(grid, PortalSpec(center_x=0.5, center_y=0.5, radius=1.0))

    solution = solve_vstar(grid, chi, params)
    max_vstar, ingredient = linf_bound_ingredients(params, chi, grid)

    assert np.all(solution.field.values == 0.0)
    assert max_vstar == 0.0
    assert ingredient == 0.0


def test_vstar_converges_at_second_order():
    params = ModelParams()

    def error(n: int) -> float:
        grid = Grid(nx=n, ny=n)
        solution = solve_vstar(grid, cosine_source(grid), params)
        exact = cosines(grid) / (2.0 * np.pi**2 * params.beta)
        return float(np.max(np.abs(solution.field.values - exact)))

    coarse, fine = error(32), error(64)

    assert 3.5 <= coarse / fine <= 4.5


def test_aux_converges_at_second_order():
    params = ModelParams()

    def error(n: int) -> float:
        grid = Grid(nx=n, ny=n)
        solution = solve_aux(grid, cosine_source(grid), params)
        exact = 1.0 / params.eta + cosines(grid) / (
            2.0 * np.pi**2 * params.beta + params.eta
        )
        return float(np.max(np.abs(solution.field.values - exact)))

    coarse, fine = error(32), error(64)

    assert 3.5 <= coarse / fine <= 4.5


def direct_aux(grid: Grid, chi: ScalarField, params: ModelParams) -> np.ndarray:
    """-beta Δw + eta w = chi by a sparse LU factorisation."""
    size = grid.nx * grid.ny
    matrix = sparse.csc_array(
        params.eta * sparse.eye_array(size) - params.beta * laplacian_matrix(grid)
    )
    return splu(matrix).solve(chi.values.ravel()).reshape(grid.shape)


def direct_vstar(grid: Grid, chi: ScalarField, params: ModelParams) -> np.ndarray:
    """The zero-mean v* by a sparse LU solve with the first cell pinned to zero."""
    matrix = sparse.csc_array(-params.beta * laplacian_matrix(grid))
    rhs = remove_mean(chi.values - 1.0 / grid.area).ravel()

    values = np.zeros(rhs.size)
    values[1:] = splu(sparse.csc_array(matrix[1:, 1:])).solve(rhs[1:])
    return remove_mean(values.reshape(grid.shape))


def restrict(values: np.ndarray, n: int) -> np.ndarray:
    """Average the fine cells covering each cell of an n x n grid."""
    factor = values.shape[0] // n
    return values.reshape(n, factor, n, factor).mean(axis=(1, 3))


def test_conjugate_gradient_stops_at_the_roundoff_floor():
    grid = Grid(nx=64, ny=64)
    rhs = cosine_source(grid)

    solution = solve_shifted(rhs, 1.0, 1.0, 1e-16)
    floor = 4.0 * EPS * shifted_operator_norm(grid, 1.0, 1.0) * solution.field.max()

    assert 1e-16 < solution.residual_norm <= floor

    def apply(values: np.ndarray) -> np.ndarray:
        return values - laplacian_values(values, grid)

    with pytest.raises(NoConvergence):
        conjugate_gradient(apply, rhs.values, np.zeros(grid.shape), 1e-16, 500)


def test_threshold_agrees_with_a_direct_solve():
    grid = Grid(nx=64, ny=64)
    params = ModelParams(beta=0.3, eta=0.2)
    chi = build_chi(grid, PortalSpec())

    solution = solve_aux(grid, chi, params)
    direct = direct_aux(grid, chi, params)

    threshold = v_threshold(solution, chi.mask)
    assert threshold > 0.0
    assert threshold == pytest.approx(float(direct[chi.mask].min()), rel=1e-8)
    assert solution.field.values == pytest.approx(direct, rel=1e-8)


@pytest.mark.slow
def test_portal_problems_converge_under_refinement():
    # The pixelated portal disc carries an O(h) area error, so the max-norm
    # error against a fine reference drops by at least half per refinement
    # rather than by the factor four of a smooth source.
    params = ModelParams()
    reference_grid = Grid(nx=512, ny=512)
    reference_chi = build_chi(reference_grid, PortalSpec())
    references = {
        "aux": direct_aux(reference_grid, reference_chi, params),
        "vstar": direct_vstar(reference_grid, reference_chi, params),
    }

    def errors(n: int) -> dict[str, float]:
        grid = Grid(nx=n, ny=n)
        chi = build_chi(grid, PortalSpec())
        solutions = {
            "aux": solve_aux(grid, chi, params).field.values,
            "vstar": solve_vstar(grid, chi, params).field.values,
        }
        return {
            name: float(np.max(np.abs(values - restrict(references[name], n))))
            for name, values in solutions.items()
        }

    coarse, fine = errors(64), errors(128)

    for name in references:
        assert fine[name] <= coarse[name] / 2.0
