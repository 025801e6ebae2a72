"""
Matrix-free conjugate-gradient solves of the Neumann problems

    shift * w - diffusion * Δw = f,    ∇w·n = 0,

used for the auxiliary stationary problem (shift = eta), the zero-mean problem
for v* (shift = 0) and, as a refinement of the factorised solve, the implicit
diffusion half of a time step (shift = 1).

Residuals are measured in the max norm. A requested tolerance below the
roundoff floor of the operator is raised to that floor, so on fine grids the
reported residual may exceed `tol`.
"""

from collections.abc import Callable

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse.linalg import LinearOperator, cg

from hepasim.exceptions import (
    EmptyPortal,
    InvariantViolation,
    NoConvergence,
    SolvabilityViolated,
)
from hepasim.grid import (
    BoolArray,
    FloatArray,
    Grid,
    ScalarField,
    laplacian_values,
    quadrature,
)
from hepasim.model import ModelParams

type Operator = Callable[[FloatArray], FloatArray]
type Projection = Callable[[FloatArray], FloatArray]

SOLVABILITY_TOL = 1e-8
ROUNDOFF_FACTOR = 4.0
EPS = float(np.finfo(np.float64).eps)


class EllipticSolution(BaseModel):
    """
    A converged stationary field.

    Attributes:
        field: The solution
        residual_norm: Max-norm of the discrete residual at return
        iterations: Number of CG iterations used
    """

    model_config = ConfigDict(frozen=True)

    field: ScalarField
    residual_norm: float = Field(ge=0.0)
    iterations: int = Field(ge=0)


def default_max_iters(grid: Grid) -> int:
    return 50 * (grid.nx + grid.ny)


def remove_mean(values: FloatArray) -> FloatArray:
    return values - values.mean()


def shifted_operator_norm(grid: Grid, shift: float, diffusion: float) -> float:
    """The max-norm of shift * I - diffusion * Δ on `grid`."""
    return shift + 4.0 * diffusion * (1.0 / grid.hx**2 + 1.0 / grid.hy**2)


def conjugate_gradient(
    apply: Operator,
    rhs: FloatArray,
    x0: FloatArray,
    tol: float,
    max_iters: int,
    project: Projection | None = None,
    operator_norm: float = 0.0,
) -> tuple[FloatArray, float, int]:
    """
    Conjugate gradients for a symmetric positive (semi-)definite operator.

    Convergence is declared on the max-norm of the true residual. scipy's
    `cg` stops on the 2-norm of its recursively updated residual, which
    bounds the max-norm. The iteration is restarted from the current iterate
    every chunk of iterations and whenever the true residual still exceeds
    the tolerance, until the budget is spent.

    The tolerance is raised to the roundoff floor of the residual,
    ROUNDOFF_FACTOR * eps * operator_norm * max|x|, when that is larger. On
    fine grids the diffusion operator has a norm of order 1/h², and the
    residual cannot be computed more accurately than that floor.

    Args:
        apply: The operator, acting on arrays shaped like `rhs`.
        rhs: Right-hand side.
        x0: Initial guess.
        tol: Max-norm residual tolerance.
        max_iters: Iteration budget.
        project: Optional projection onto the subspace the iterates must stay
            in, applied before and after the operator.
        operator_norm: Max-norm of the operator, zero to disable the floor.

    Returns:
        The solution, its residual max-norm and the iteration count.

    Raises:
        NoConvergence: If the tolerance is not met within max_iters.
    """
    shape = rhs.shape

    def restrict(values: FloatArray) -> FloatArray:
        return project(values) if project is not None else values

    def matvec(flat: FloatArray) -> FloatArray:
        return restrict(apply(restrict(flat.reshape(shape)))).ravel()

    def true_residual(values: FloatArray) -> float:
        return float(np.max(np.abs(restrict(rhs - apply(values)))))

    def threshold(values: FloatArray) -> float:
        scale = operator_norm * float(np.max(np.abs(values)))
        return max(tol, ROUNDOFF_FACTOR * EPS * scale)

    size = rhs.size
    operator = LinearOperator((size, size), matvec=matvec, dtype=np.float64)
    b = restrict(rhs).ravel()

    x = restrict(x0.astype(np.float64, copy=True))
    residual = true_residual(x)

    if residual <= threshold(x):
        return x, residual, 0

    # cg cannot see the floor; it runs in chunks with the true residual tested
    # in between
    chunk = max(100, max_iters // 10)
    iterations = 0

    def count(_: FloatArray) -> None:
        nonlocal iterations
        iterations += 1

    while iterations < max_iters:
        before = iterations
        flat, _ = cg(  # pyright: ignore[reportUnknownVariableType]
            operator,
            b,
            x0=x.ravel(),
            rtol=0.0,
            atol=threshold(x),
            maxiter=min(chunk, max_iters - iterations),
            callback=count,
        )
        x = restrict(np.asarray(flat, dtype=np.float64).reshape(shape))
        residual = true_residual(x)

        if residual <= threshold(x):
            return x, residual, iterations

        if iterations == before:
            break

    raise NoConvergence(max_iters, residual)


def solve_shifted(
    rhs: ScalarField,
    shift: float,
    diffusion: float,
    tol: float,
    max_iters: int | None = None,
    initial: ScalarField | None = None,
) -> EllipticSolution:
    """
    Solve shift * w - diffusion * Δw = rhs with zero-flux boundaries.

    Requires shift > 0; the singular case is handled by `solve_vstar`.
    """
    grid = rhs.grid

    def apply(values: FloatArray) -> FloatArray:
        return shift * values - diffusion * laplacian_values(values, grid)

    x0 = initial.values if initial is not None else np.zeros(grid.shape)
    budget = max_iters if max_iters is not None else default_max_iters(grid)

    values, residual, iterations = conjugate_gradient(
        apply,
        rhs.values,
        x0,
        tol,
        budget,
        operator_norm=shifted_operator_norm(grid, shift, diffusion),
    )

    return EllipticSolution(
        field=rhs.with_values(values),
        residual_norm=residual,
        iterations=iterations,
    )


def solve_aux(
    grid: Grid,
    chi: ScalarField,
    params: ModelParams,
    tol: float = 1e-10,
    max_iters: int | None = None,
) -> EllipticSolution:
    """
    The auxiliary stationary problem -beta Δw + eta w = chi.

    Integrating over the domain gives eta * quadrature(w) = quadrature(chi).

    Raises:
        NoConvergence: If the tolerance is not reached.
        InvariantViolation: If the solution is not strictly positive.
    """
    if chi.grid != grid:
        raise ValueError("The source field lives on a different grid.")

    solution = solve_shifted(chi, params.eta, params.beta, tol, max_iters)

    logger.debug(
        f"Auxiliary problem solved in {solution.iterations} iterations, "
        f"residual {solution.residual_norm:.3e}"
    )

    if solution.field.min() <= 0.0:
        raise InvariantViolation(
            f"Auxiliary solution has non-positive minimum {solution.field.min()}.",
            "auxiliary problem positivity",
        )

    return solution


def v_threshold(sol: EllipticSolution, theta_mask: BoolArray) -> float:
    """
    The minimum of the auxiliary solution over the portal cells.

    Raises:
        EmptyPortal: If the mask selects no cell.
        InvariantViolation: If the minimum is not strictly positive.
    """
    if theta_mask.shape != sol.field.grid.shape:
        raise ValueError("The portal mask does not match the solution grid.")

    if not np.any(theta_mask):
        raise EmptyPortal("The portal mask selects no cell.", "threshold over Θ")

    threshold = float(sol.field.values[theta_mask].min())

    if threshold <= 0.0:
        raise InvariantViolation(
            f"Threshold {threshold} over Θ is not positive.", "threshold over Θ"
        )

    return threshold


def solve_vstar(
    grid: Grid,
    chi: ScalarField,
    params: ModelParams,
    tol: float = 1e-10,
    max_iters: int | None = None,
) -> EllipticSolution:
    """
    The zero-mean solution of -beta Δv = chi - 1/|Ω| with zero-flux boundaries.

    The constant vector spans the null space of the operator. The right-hand
    side and every iterate are projected onto the zero-mean subspace.

    Raises:
        SolvabilityViolated: If chi does not integrate to one.
        NoConvergence: If the tolerance is not reached.
    """
    if chi.grid != grid:
        raise ValueError("The source field lives on a different grid.")

    mass = quadrature(chi)
    if abs(mass - 1.0) > SOLVABILITY_TOL:
        raise SolvabilityViolated(
            f"The portal profile integrates to {mass}, not 1.", "v* solvability"
        )

    rhs = remove_mean(chi.values - 1.0 / grid.area)

    def apply(values: FloatArray) -> FloatArray:
        return -params.beta * laplacian_values(values, grid)

    budget = max_iters if max_iters is not None else default_max_iters(grid)

    values, residual, iterations = conjugate_gradient(
        apply,
        rhs,
        np.zeros(grid.shape),
        tol,
        budget,
        project=remove_mean,
        operator_norm=shifted_operator_norm(grid, 0.0, params.beta),
    )

    logger.debug(
        f"Zero-mean problem solved in {iterations} iterations, "
        f"residual {residual:.3e}"
    )

    return EllipticSolution(
        field=chi.with_values(remove_mean(values)),
        residual_norm=residual,
        iterations=iterations,
    )
