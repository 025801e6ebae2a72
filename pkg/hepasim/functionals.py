"""
Scalar diagnostics of a solution and the analytic bounds they are compared
against: total masses U and V, the functionals Phi and Psi, the weighted mean
xi, the trapezoid Sigma with its upper value V_up, the L2 envelope E, the
empirical theta of the integral estimate and the v*-based pointwise ingredient.
"""

import csv
import math
from collections.abc import Iterable
from enum import StrEnum
from pathlib import Path
from typing import TYPE_CHECKING, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from hepasim.elliptic import solve_vstar
from hepasim.exceptions import NoValidSamples, ParseError
from hepasim.grid import FloatArray, Grid, ScalarField, quadrature
from hepasim.model import ModelParams

if TYPE_CHECKING:
    from hepasim.integrator import SimState

DEGENERATE_MASS = 1e-14

TRAJECTORY_COLUMNS = ("t", "U", "V", "phi", "psi", "xi", "u_min", "u_max", "v_max")


class DiagnosticsRecord(BaseModel):
    """
    Diagnostics of one sampled state.

    Attributes:
        t: Time
        U: Total virus amount, the L1 norm of u
        V: Total T cell amount, the L1 norm of v
        phi: eta U + gamma V
        psi: Half the squared L2 norm of v
        xi: Mean of (1 - u) weighted with v^2, 1 when v vanishes
        u_min_val: Minimum of u
        u_max_val: Maximum of u
        v_max_val: Maximum of v
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    t: float = Field(allow_inf_nan=False)
    U: float = Field(ge=0.0, allow_inf_nan=False)
    V: float = Field(ge=0.0, allow_inf_nan=False)
    phi: float = Field(allow_inf_nan=False)
    psi: float = Field(ge=0.0, allow_inf_nan=False)
    xi: float = Field(allow_inf_nan=False)
    u_min_val: float = Field(alias="u_min", allow_inf_nan=False)
    u_max_val: float = Field(alias="u_max", allow_inf_nan=False)
    v_max_val: float = Field(alias="v_max", allow_inf_nan=False)

    def row(self) -> list[str]:
        values = (
            self.t,
            self.U,
            self.V,
            self.phi,
            self.psi,
            self.xi,
            self.u_min_val,
            self.u_max_val,
            self.v_max_val,
        )
        return [f"{value:.17g}" for value in values]


class TrajectoryMeta(BaseModel):
    """
    The run metadata needed to reproduce every derived bound from the
    diagnostics alone.
    """

    model_config = ConfigDict(frozen=True)

    params: ModelParams
    grid: Grid
    dt: float = Field(gt=0.0)
    snapshot_every: int = Field(ge=1)
    chi_max: float = Field(gt=0.0)


class Trajectory(TrajectoryMeta):
    """A time-ordered series of diagnostics of one run."""

    records: list[DiagnosticsRecord]

    @model_validator(mode="after")
    def _strictly_increasing(self) -> Self:
        times = [record.t for record in self.records]
        if any(later <= earlier for earlier, later in zip(times, times[1:])):
            raise ValueError("Trajectory times must be strictly increasing.")
        return self

    @property
    def omega_area(self) -> float:
        return self.grid.area

    @property
    def times(self) -> list[float]:
        return [record.t for record in self.records]

    def column(self, name: str) -> FloatArray:
        return np.array([getattr(record, name) for record in self.records])


class SigmaRegion(BaseModel):
    """
    The trapezoid 0 <= U <= |Ω|, 0 <= V <= v_up - slope U.

    Attributes:
        omega_area: |Ω|
        v_up: The upper value (1/gamma)(eta + 1 + gamma delta/eta)|Ω|
        slope: eta / gamma
    """

    model_config = ConfigDict(frozen=True)

    omega_area: float = Field(gt=0.0)
    v_up: float = Field(gt=0.0)
    slope: float = Field(gt=0.0)

    def vertices(self) -> list[tuple[float, float]]:
        return [
            (0.0, 0.0),
            (self.omega_area, 0.0),
            (self.omega_area, self.v_up - self.slope * self.omega_area),
            (0.0, self.v_up),
        ]

    def upper_edge(self, U: float) -> float:
        return self.v_up - self.slope * U


class ThetaEstimate(BaseModel):
    """
    Empirical constant of the estimate ∫u v^rho <= theta ∫v^rho.

    Attributes:
        theta: The largest ratio at or after the onset time, or over all
            samples if the ratio never settles below one
        onset_time: Earliest sample time after which every ratio stays below
            one; None if no such time exists
        rho: The exponent used
        samples: Number of non-degenerate samples
    """

    model_config = ConfigDict(frozen=True)

    theta: float
    onset_time: float | None
    rho: float = Field(ge=0.0)
    samples: int = Field(ge=1)


class EnvelopeConstant(StrEnum):
    """Which constant multiplies the integral term of the envelope."""

    BOUND = "bound"  # delta chi_max |Ω| V_up
    PRINTED = "printed"  # delta |Ω| V_up


def weighted_mean_xi(u: ScalarField, v: ScalarField) -> float:
    """
    xi = ∫(1 - u) v^2 / ∫v^2, defined as 1 when ∫v^2 is degenerate.
    """
    v_squared = v.values**2
    mass = float(np.sum(v_squared)) * v.grid.cell_area

    if mass < DEGENERATE_MASS:
        return 1.0

    weighted = float(np.sum((1.0 - u.values) * v_squared)) * v.grid.cell_area
    return weighted / mass


def compute_record(
    state: SimState, params: ModelParams, chi: ScalarField
) -> DiagnosticsRecord:
    """
    Evaluate the diagnostics of a state.

    Args:
        state: The state to evaluate.
        params: Model parameters.
        chi: The portal profile; must live on the state's grid.
    """
    if chi.grid != state.u.grid:
        raise ValueError("The portal profile lives on a different grid.")

    U = quadrature(state.u)
    V = quadrature(state.v)

    return DiagnosticsRecord(
        t=state.t,
        U=U,
        V=V,
        phi=params.eta * U + params.gamma * V,
        psi=0.5 * float(np.sum(state.v.values**2)) * state.v.grid.cell_area,
        xi=weighted_mean_xi(state.u, state.v),
        u_min=state.u.min(),
        u_max=state.u.max(),
        v_max=state.v.max(),
    )


def v_up(params: ModelParams, omega_area: float) -> float:
    """
    The upper value of the total T cell amount.

    Example:
        >>> round(v_up(ModelParams(gamma=0.9, eta=0.2, delta=3.7), 1.0), 3)
        19.833
    """
    return (
        (params.eta + 1.0 + params.gamma * params.delta / params.eta)
        * omega_area
        / params.gamma
    )


def sigma_region(params: ModelParams, omega_area: float) -> SigmaRegion:
    return SigmaRegion(
        omega_area=omega_area,
        v_up=v_up(params, omega_area),
        slope=params.eta / params.gamma,
    )


def sigma_contains(region: SigmaRegion, U: float, V: float, tol: float = 0.0) -> bool:
    """
    Whether (U, V) lies in the trapezoid, with every edge relaxed by tol.

    Example:
        >>> region = sigma_region(ModelParams(), 1.0)
        >>> sigma_contains(region, 0.0, 0.0)
        True
        >>> sigma_contains(region, 1.0, region.v_up)
        False
    """
    if tol < 0.0:
        raise ValueError("tol must be non-negative.")

    return (
        -tol <= U <= region.omega_area + tol
        and -tol <= V <= region.upper_edge(U) + tol
    )


def sigma_margin(region: SigmaRegion, U: float, V: float) -> float:
    """Signed distance-like margin to the nearest edge; negative outside."""
    return min(U, region.omega_area - U, V, region.upper_edge(U) - V)


def phi_rate_bound(params: ModelParams, U: float, V: float) -> float:
    """The upper bound (eta + gamma delta) U - gamma eta V on dPhi/dt."""
    return (
        params.eta + params.gamma * params.delta
    ) * U - params.gamma * params.eta * V


def theta_ratio(state: SimState, rho: float) -> float | None:
    """
    ∫u v^rho / ∫v^rho for one state, or None if the denominator is degenerate.
    """
    if rho < 0.0:
        raise ValueError("rho must be non-negative.")

    weight = np.power(state.v.values, rho)
    mass = float(np.sum(weight)) * state.v.grid.cell_area

    if mass < DEGENERATE_MASS:
        return None

    return float(np.sum(state.u.values * weight)) * state.v.grid.cell_area / mass


def summarize_theta(
    samples: Iterable[tuple[float, float | None]], rho: float
) -> ThetaEstimate:
    """
    Reduce (time, ratio) samples to a ThetaEstimate.

    Raises:
        NoValidSamples: If every ratio is degenerate.
    """
    valid = [(t, ratio) for t, ratio in samples if ratio is not None]

    if not valid:
        raise NoValidSamples(
            "Every sample has a degenerate denominator.", "integral estimate"
        )

    onset_index: int | None = None
    for index in range(len(valid) - 1, -1, -1):
        if valid[index][1] >= 1.0:
            break
        onset_index = index

    tail = valid[onset_index:] if onset_index is not None else valid

    return ThetaEstimate(
        theta=max(ratio for _, ratio in tail),
        onset_time=valid[onset_index][0] if onset_index is not None else None,
        rho=rho,
        samples=len(valid),
    )


def estimate_theta(states: Iterable[SimState], rho: float = 2.0) -> ThetaEstimate:
    """
    The empirical theta over a sequence of states.

    Example:
        >>> from hepasim.grid import Grid
        >>> from hepasim.integrator import SimState
        >>> grid = Grid(nx=4, ny=4)
        >>> state = SimState(
        ...     t=0.0,
        ...     u=ScalarField.constant(grid, 0.25),
        ...     v=ScalarField.constant(grid, 2.0),
        ... )
        >>> estimate_theta([state]).theta
        0.25
    """
    return summarize_theta(
        ((state.t, theta_ratio(state, rho)) for state in states), rho
    )


def theta_from_trajectory(trajectory: Trajectory) -> ThetaEstimate:
    """
    The empirical theta for rho = 2 from recorded diagnostics alone.

    With rho = 2 the ratio ∫u v^2 / ∫v^2 equals 1 - xi, and ∫v^2 = 2 Psi.
    """
    samples = [
        (record.t, 1.0 - record.xi if 2.0 * record.psi >= DEGENERATE_MASS else None)
        for record in trajectory.records
    ]
    return summarize_theta(samples, 2.0)


def envelope_constant(
    params: ModelParams,
    chi_max: float,
    omega_area: float,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> float:
    upper = v_up(params, omega_area)

    match variant:
        case EnvelopeConstant.BOUND:
            return params.delta * chi_max * omega_area * upper
        case EnvelopeConstant.PRINTED:
            return params.delta * omega_area * upper


def envelope_E(
    trajectory: Trajectory,
    params: ModelParams,
    chi_max: float,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> list[tuple[float, float]]:
    """
    The L2 envelope

        E(t) = exp(-2 eta X(t)) (M' ∫_0^t exp(2 eta X(s)) ds + Psi(0)),

    with X(t) = ∫_0^t xi. Both time integrals use the trapezoidal rule over the
    recorded samples, evaluated by the recursion

        E_k = E_{k-1} q_k + M' (t_k - t_{k-1}) (q_k + 1) / 2,
        q_k = exp(-eta (xi_{k-1} + xi_k)(t_k - t_{k-1})),

    which never forms exp(2 eta X) and so cannot overflow on long runs.
    """
    if not trajectory.records:
        raise ValueError("The trajectory has no samples.")

    constant = envelope_constant(params, chi_max, trajectory.omega_area, variant)

    first = trajectory.records[0]
    envelope = first.psi
    result = [(first.t, envelope)]

    for previous, current in zip(trajectory.records, trajectory.records[1:]):
        span = current.t - previous.t
        decay = math.exp(-params.eta * (previous.xi + current.xi) * span)
        envelope = envelope * decay + constant * span * (decay + 1.0) / 2.0
        result.append((current.t, envelope))

    return result


def psi_limit(
    params: ModelParams,
    chi_max: float,
    omega_area: float,
    theta: float,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> float:
    """The largest accumulation point M / (2 eta (1 - theta)) of Psi."""
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must lie in [0, 1).")

    constant = envelope_constant(params, chi_max, omega_area, variant)
    return constant / (2.0 * params.eta * (1.0 - theta))


def psi_rough_bound(
    t: float,
    psi0: float,
    params: ModelParams,
    chi_max: float,
    omega_area: float,
    theta: float,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> float:
    """Psi(0) exp(-2 eta (1 - theta) t) + M / (2 eta (1 - theta))."""
    decay = math.exp(-2.0 * params.eta * (1.0 - theta) * t)
    limit = psi_limit(params, chi_max, omega_area, theta, variant)
    return psi0 * decay + limit


def psi_estimates(
    trajectory: Trajectory,
    theta: ThetaEstimate,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> dict[str, float]:
    """
    theta with the limit of Psi and the rough bound at the final sample,
    restarted from Psi at the onset time.

    Empty unless theta settled below one with rho = 2, the exponent the L2
    estimate is built on.
    """
    onset = theta.onset_time
    if onset is None or theta.rho != 2.0 or not 0.0 <= theta.theta < 1.0:
        return {}

    start = next(record for record in trajectory.records if record.t >= onset)
    final = trajectory.records[-1]
    args = (trajectory.params, trajectory.chi_max, trajectory.omega_area)

    return {
        "theta": theta.theta,
        "psi_limit": psi_limit(*args, theta.theta, variant),
        "psi_rough_bound": psi_rough_bound(
            final.t - start.t, start.psi, *args, theta.theta, variant
        ),
    }


def linf_bound_ingredients(
    params: ModelParams, chi: ScalarField, grid: Grid, tol: float = 1e-10
) -> tuple[float, float]:
    """
    The maximum of v* and the computable part delta |Ω| max v* of the
    pointwise bound on v.

    Raises:
        SolvabilityViolated, NoConvergence: From the v* solve.
    """
    solution = solve_vstar(grid, chi, params, tol)
    max_vstar = max(solution.field.max(), 0.0)
    return max_vstar, params.delta * grid.area * max_vstar


def write_trajectory(trajectory: Trajectory, path: Path) -> Path:
    """
    Write the records as CSV and the run metadata as a JSON sidecar.

    Returns:
        The path of the sidecar, `<path>.meta.json`.
    """
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for record in trajectory.records:
            writer.writerow(record.row())

    meta = TrajectoryMeta.model_validate(trajectory.model_dump(exclude={"records"}))
    meta_path = path.with_suffix(path.suffix + ".meta.json")

    with meta_path.open("w", encoding="utf-8") as f:
        f.write(meta.model_dump_json(indent=2))

    return meta_path


def read_records(path: Path) -> list[DiagnosticsRecord]:
    """
    Read trajectory records from CSV.

    Raises:
        ParseError: If the file is missing, empty or malformed.
    """
    try:
        with path.open(encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise ParseError(f"Failed to read trajectory {path}: {e}") from e

    if not rows or tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise ParseError(
            f"{path} does not start with the header {','.join(TRAJECTORY_COLUMNS)}."
        )

    if len(rows) == 1:
        raise ParseError(f"{path} holds no samples.")

    records: list[DiagnosticsRecord] = []
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRAJECTORY_COLUMNS):
            raise ParseError(f"{path}, row {number}: expected 9 columns.")
        try:
            records.append(
                DiagnosticsRecord.model_validate(
                    dict(zip(TRAJECTORY_COLUMNS, row, strict=True))
                )
            )
        except ValidationError as e:
            raise ParseError(f"{path}, row {number}: {e}") from e

    return records


def read_trajectory(path: Path) -> Trajectory:
    """
    Read a trajectory and its metadata sidecar.

    Raises:
        ParseError: If either file is missing or malformed.
    """
    records = read_records(path)
    meta_path = path.with_suffix(path.suffix + ".meta.json")

    try:
        meta = meta_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"Failed to read trajectory metadata {meta_path}: {e}") from e

    try:
        return Trajectory(
            records=records,
            **TrajectoryMeta.model_validate_json(meta).model_dump(),
        )
    except ValidationError as e:
        raise ParseError(f"{meta_path}: {e}") from e

