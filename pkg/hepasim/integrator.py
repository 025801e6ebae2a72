"""
First-order IMEX time stepping of the coupled system: reaction terms and the
non-local inflow are explicit, diffusion is implicit. The implicit systems are
solved with sparse LU factors, computed once per grid and coefficient.
"""

import functools
import math
from collections.abc import Callable
from typing import Self

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse
from scipy.sparse.linalg import splu

from hepasim.elliptic import solve_shifted
from hepasim.exceptions import InvariantViolation, StabilityViolation
from hepasim.functionals import DiagnosticsRecord, Trajectory, compute_record
from hepasim.grid import (
    FloatArray,
    Grid,
    ScalarField,
    laplacian_matrix,
    laplacian_values,
)
from hepasim.model import (
    ModelParams,
    growth_rate_bound,
    reaction_u,
    reaction_v,
)

NEGATIVITY_TOL = 1e-12


class SimState(BaseModel):
    """
    The solution pair at one time.

    Non-negativity is checked at construction up to NEGATIVITY_TOL.
    """

    model_config = ConfigDict(frozen=True)

    t: float = Field(ge=0.0, allow_inf_nan=False)
    u: ScalarField
    v: ScalarField

    @model_validator(mode="after")
    def _check_state(self) -> Self:
        if self.u.grid != self.v.grid:
            raise ValueError("u and v must share a grid.")

        if self.u.min() < -NEGATIVITY_TOL or self.v.min() < -NEGATIVITY_TOL:
            raise ValueError(
                f"State at t={self.t} is negative: min u = {self.u.min()}, "
                f"min v = {self.v.min()}."
            )

        return self


class StepControl(BaseModel):
    """
    Time-stepping controls.

    Attributes:
        dt: Time step
        t_final: End time
        snapshot_every: Diagnostics cadence, in steps
        solver_tol: Max-norm residual tolerance of the implicit solves,
            relative to max(1, max|rhs|). A factorised solve that misses it
            is refined with conjugate gradients
        clip_tol: Negative values above -clip_tol * max(1, max|field|) are
            set to zero after a step; anything below is an invariant violation
    """

    model_config = ConfigDict(frozen=True)

    dt: float = Field(default=1e-3, gt=0.0, allow_inf_nan=False)
    t_final: float = Field(default=10.0, ge=0.0, allow_inf_nan=False)
    snapshot_every: int = Field(default=10, ge=1)
    solver_tol: float = Field(default=1e-13, gt=0.0)
    clip_tol: float = Field(default=NEGATIVITY_TOL, ge=0.0)

    @property
    def n_steps(self) -> int:
        # Rounded so that t_final = k * dt does not gain a step from roundoff
        return max(0, math.ceil(self.t_final / self.dt - 1e-9))


type DiagnosticsSink = Callable[[DiagnosticsRecord, SimState], None]
type LinearSolve = Callable[[FloatArray], FloatArray]


def dt_max(params: ModelParams, chi: ScalarField, state: SimState) -> float:
    """
    Conservative stability limit for the explicit reaction part,

        0.5 / (|w|_max + gamma v_cap + eta + delta chi_max |Ω|),

    with v_cap the current maximum of v.
    """
    v_cap = max(state.v.max(), 0.0)
    rate = (
        growth_rate_bound(params)
        + params.gamma * v_cap
        + params.eta
        + params.delta * chi.max() * chi.grid.area
    )
    return 0.5 / rate


def _clip(values: FloatArray, tol: float, name: str, t: float) -> FloatArray:
    floor = -tol * max(1.0, float(np.max(np.abs(values))))
    lowest = float(values.min())

    if lowest < floor:
        raise InvariantViolation(
            f"{name} reached {lowest:.3e} at t={t}, below the roundoff floor "
            f"{floor:.3e}.",
            "non-negativity",
        )

    return np.where(values < 0.0, 0.0, values)


@functools.lru_cache(maxsize=8)
def diffusion_solver(grid: Grid, coefficient: float) -> LinearSolve:
    """
    Sparse LU factors of I - coefficient Δ, shared by every step that uses the
    same grid and coefficient.
    """
    matrix = sparse.csc_array(
        sparse.eye_array(grid.nx * grid.ny, format="csc")
        - coefficient * laplacian_matrix(grid)
    )
    logger.debug(
        f"Factorising I - {coefficient:.3e} Δ on a {grid.nx}x{grid.ny} grid"
    )
    return splu(matrix).solve  # pyright: ignore[reportUnknownMemberType]


def _implicit_diffusion(
    rhs: ScalarField, diffusion: float, ctrl: StepControl
) -> ScalarField:
    grid = rhs.grid
    tol = ctrl.solver_tol * max(1.0, float(np.max(np.abs(rhs.values))))

    def residual(values: FloatArray) -> float:
        applied = values - diffusion * laplacian_values(values, grid)
        return float(np.max(np.abs(applied - rhs.values)))

    if residual(rhs.values) <= tol:
        return rhs

    solve = diffusion_solver(grid, diffusion)
    values = np.asarray(solve(rhs.values.ravel()), dtype=np.float64)
    values = values.reshape(grid.shape)

    if residual(values) > tol:
        refined = solve_shifted(
            rhs, 1.0, diffusion, tol, initial=rhs.with_values(values)
        )
        return refined.field

    return rhs.with_values(values)


def step(
    state: SimState, params: ModelParams, chi: ScalarField, ctrl: StepControl
) -> SimState:
    """
    Advance one IMEX step of length ctrl.dt.

    The explicit half forms u* = u + dt f(u, v) and v* = v + dt g(u, v); the
    implicit half solves (I - dt alpha Δ) u+ = u* and (I - dt beta Δ) v+ = v*.

    Raises:
        StabilityViolation: If dt exceeds the stability limit of the state.
        InvariantViolation: If the new state is negative beyond roundoff.
        NoConvergence: If an implicit solve fails.
    """
    limit = dt_max(params, chi, state)
    if ctrl.dt > limit:
        raise StabilityViolation(ctrl.dt, limit)

    dt = ctrl.dt
    u, v = state.u, state.v

    u_star = u.with_values(u.values + dt * reaction_u(u, v, params).values)
    v_star = v.with_values(v.values + dt * reaction_v(u, v, chi, params).values)

    u_next = _implicit_diffusion(u_star, dt * params.alpha, ctrl)
    v_next = _implicit_diffusion(v_star, dt * params.beta, ctrl)

    t_next = state.t + dt

    return SimState(
        t=t_next,
        u=u_next.with_values(_clip(u_next.values, ctrl.clip_tol, "u", t_next)),
        v=v_next.with_values(_clip(v_next.values, ctrl.clip_tol, "v", t_next)),
    )


def run(
    initial: SimState,
    params: ModelParams,
    chi: ScalarField,
    ctrl: StepControl,
    diagnostics_sink: DiagnosticsSink | None = None,
) -> Trajectory:
    """
    Integrate from the initial state until t_final, recording diagnostics
    every ctrl.snapshot_every steps and always at the final step.

    Times are computed as initial.t + k dt to avoid accumulating roundoff.

    Args:
        initial: The initial state.
        params: Model parameters.
        chi: The portal inflow profile.
        ctrl: Step controls.
        diagnostics_sink: Called with every record and the state it was
            computed from.

    Returns:
        The completed trajectory.
    """

    records: list[DiagnosticsRecord] = []

    def emit(current: SimState) -> None:
        record = compute_record(current, params, chi)
        records.append(record)

        if diagnostics_sink is not None:
            diagnostics_sink(record, current)

    emit(initial)

    state = initial
    n_steps = ctrl.n_steps

    logger.info(
        f"Integrating {n_steps} steps of dt={ctrl.dt} on a "
        f"{initial.u.grid.nx}x{initial.u.grid.ny} grid"
    )

    for k in range(1, n_steps + 1):
        advanced = step(state, params, chi, ctrl)
        state = advanced.model_copy(update={"t": initial.t + k * ctrl.dt})

        if k % ctrl.snapshot_every == 0 or k == n_steps:
            emit(state)
            logger.debug(
                f"t={state.t:.4f} U={records[-1].U:.6g} V={records[-1].V:.6g}"
            )

    return Trajectory(
        records=records,
        params=params,
        grid=initial.u.grid,
        dt=ctrl.dt,
        snapshot_every=ctrl.snapshot_every,
        chi_max=chi.max(),
    )
