"""
Turns the analytic bounds into checks over simulation output and collects the
outcome in a BoundsReport.

Every check yields a worst margin: the smallest value of (bound - quantity)
over the samples it inspects, so that negative margins are violations. A check
passes when its worst margin does not fall below its tolerance.
"""

import csv
import math
from collections.abc import Callable, Sequence
from enum import StrEnum
from pathlib import Path

from jinja2 import Environment, FileSystemLoader
from pydantic import BaseModel, ConfigDict, Field

from hepasim._logging import Logger
from hepasim.exceptions import InconsistentInputs
from hepasim.functionals import (
    EnvelopeConstant,
    ThetaEstimate,
    Trajectory,
    envelope_constant,
    envelope_E,
    phi_rate_bound,
    sigma_contains,
    sigma_margin,
    sigma_region,
)
from hepasim.grid import ScalarField
from hepasim.integrator import SimState
from hepasim.model import ModelParams

TEMPLATES = Path(__file__).parent / "templates"

CHECKS: dict[str, str] = {
    "nonnegativity": "non-negativity of u and v",
    "u_upper_bound": "u bounded by one",
    "mass_bound": "total virus bounded by |Ω|",
    "sigma_containment": "trapezoid invariance",
    "l2_envelope": "L2 envelope",
    "psi_inequality": "L2 differential inequality",
    "phi_decay": "Phi decreasing above gamma V_up",
    "xi_window": "weighted mean bounded below by 1 - theta",
    "crosses_one": "u passes below one",
}


class CheckStatus(StrEnum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"


class Course(StrEnum):
    HEALING = "healing"
    CHRONIC = "chronic"
    UNDECIDED = "undecided"


class CheckEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    statement: str
    status: CheckStatus
    worst_margin: float | None = None
    worst_time: float | None = None
    detail: str = ""


class BoundsReport(BaseModel):
    """
    One entry per enabled check, in the order the checks were requested.
    """

    model_config = ConfigDict(frozen=True)

    entries: list[CheckEntry]
    classification: Course | None = None
    estimates: dict[str, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(entry.status != CheckStatus.FAIL for entry in self.entries)

    @property
    def failures(self) -> list[CheckEntry]:
        return [entry for entry in self.entries if entry.status == CheckStatus.FAIL]

    def entry(self, name: str) -> CheckEntry:
        for candidate in self.entries:
            if candidate.name == name:
                return candidate
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [
            f"{entry.name} {entry.status} {_format(entry.worst_margin)}"
            for entry in self.entries
        ]
        if self.classification is not None:
            lines.append(f"classification {self.classification}")
        lines.extend(
            f"{name} {_format(value)}" for name, value in self.estimates.items()
        )
        return "\n".join(lines) + "\n"

    def write_text(self, path: Path) -> None:
        path.write_text(self.to_text(), encoding="utf-8", newline="\n")

    def write_csv(self, path: Path) -> None:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(
                ["name", "statement", "status", "worst_margin", "worst_time"]
            )
            for entry in self.entries:
                writer.writerow(
                    [
                        entry.name,
                        entry.statement,
                        entry.status,
                        _format(entry.worst_margin),
                        _format(entry.worst_time),
                    ]
                )

    def write_html(self, path: Path) -> None:
        env = Environment(loader=FileSystemLoader(TEMPLATES), autoescape=True)
        template = env.get_template("report.html.j2")

        html_output = template.render(
            entries=self.entries,
            classification=self.classification,
            estimates=self.estimates,
            passed=self.passed,
            fmt=_format,
        )

        path.write_text(html_output, encoding="utf-8")


class Tolerances(BaseModel):
    """
    Tolerances of the checks and which checks are enabled.

    The bounds are analytic, so violations should be at roundoff scale only.
    """

    model_config = ConfigDict(frozen=True)

    enabled: list[str] = Field(default_factory=lambda: list(CHECKS))
    tol_neg: float = Field(default=1e-10, ge=0.0)
    tol_one: float = Field(default=1e-10, ge=0.0)
    tol_bound: float = Field(default=1e-8, ge=0.0)
    tol_envelope_rel: float = Field(default=1e-8, ge=0.0)
    tol_phi_rel: float = Field(default=1e-8, ge=0.0)
    envelope: EnvelopeConstant = EnvelopeConstant.BOUND
    rho: float = Field(default=2.0, ge=0.0)


class ClassifyThresholds(BaseModel):
    """
    Thresholds separating healing from chronic courses.

    Attributes:
        eps_heal: Healing when the final U is below eps_heal |Ω|
        window_fraction: Trailing fraction of the run inspected for
            stationarity
        stationarity_tol: Chronic when the relative change of U and V over
            the window stays below this value
    """

    model_config = ConfigDict(frozen=True)

    eps_heal: float = Field(default=0.01, gt=0.0)
    window_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    stationarity_tol: float = Field(default=1e-3, gt=0.0)


def _format(value: float | None) -> str:
    return "-" if value is None else f"{value:.17g}"


type Sample = tuple[float, float]


class _CheckContext(BaseModel):
    model_config = ConfigDict(frozen=True)

    trajectory: Trajectory
    snapshots: list[SimState]
    params: ModelParams
    chi_max: float
    tolerances: Tolerances
    theta: ThetaEstimate | None

    @property
    def starts_below_one(self) -> bool:
        first = self.trajectory.records[0]
        return first.u_max_val <= 1.0

    @property
    def starts_in_sigma(self) -> bool:
        first = self.trajectory.records[0]
        region = sigma_region(self.params, self.trajectory.omega_area)
        return self.starts_below_one and sigma_contains(region, first.U, first.V)


def _worst(samples: Sequence[Sample]) -> Sample:
    return min(samples, key=lambda sample: sample[1])


def _entry(
    name: str, samples: Sequence[Sample], tolerance: float, detail: str = ""
) -> CheckEntry:
    if not samples:
        return CheckEntry(
            name=name,
            statement=CHECKS[name],
            status=CheckStatus.PASS,
            detail=detail or "no samples in scope",
        )

    time, margin = _worst(samples)
    status = CheckStatus.PASS if margin >= -tolerance else CheckStatus.FAIL

    return CheckEntry(
        name=name,
        statement=CHECKS[name],
        status=status,
        worst_margin=margin,
        worst_time=time,
        detail=detail,
    )


def _skipped(name: str, reason: str) -> CheckEntry:
    return CheckEntry(
        name=name, statement=CHECKS[name], status=CheckStatus.SKIPPED, detail=reason
    )


def _check_nonnegativity(ctx: _CheckContext) -> CheckEntry:
    samples = [(record.t, record.u_min_val) for record in ctx.trajectory.records]
    samples += [(state.t, min(state.u.min(), state.v.min())) for state in ctx.snapshots]
    return _entry("nonnegativity", samples, ctx.tolerances.tol_neg)


def _check_u_upper_bound(ctx: _CheckContext) -> CheckEntry:
    if not ctx.starts_below_one:
        return _skipped("u_upper_bound", "initial u exceeds one")

    samples = [(record.t, 1.0 - record.u_max_val) for record in ctx.trajectory.records]
    samples += [(state.t, 1.0 - state.u.max()) for state in ctx.snapshots]
    return _entry("u_upper_bound", samples, ctx.tolerances.tol_one)


def _check_mass_bound(ctx: _CheckContext) -> CheckEntry:
    if not ctx.starts_below_one:
        return _skipped("mass_bound", "initial u exceeds one")

    area = ctx.trajectory.omega_area
    samples = [(record.t, area - record.U) for record in ctx.trajectory.records]
    return _entry("mass_bound", samples, ctx.tolerances.tol_bound)


def _check_sigma(ctx: _CheckContext) -> CheckEntry:
    if not ctx.starts_in_sigma:
        return _skipped("sigma_containment", "initial masses outside the trapezoid")

    region = sigma_region(ctx.params, ctx.trajectory.omega_area)
    samples = [
        (record.t, sigma_margin(region, record.U, record.V))
        for record in ctx.trajectory.records
    ]
    return _entry("sigma_containment", samples, ctx.tolerances.tol_bound)


def _check_envelope(ctx: _CheckContext) -> CheckEntry:
    if not ctx.starts_in_sigma:
        return _skipped("l2_envelope", "initial masses outside the trapezoid")

    envelope = envelope_E(
        ctx.trajectory, ctx.params, ctx.chi_max, ctx.tolerances.envelope
    )

    # Relative tolerance: rescale each margin by max(1, E) before comparing.
    scaled: list[Sample] = []
    raw: list[Sample] = []
    for (t, bound), record in zip(envelope, ctx.trajectory.records, strict=True):
        raw.append((t, bound - record.psi))
        scaled.append((t, (bound - record.psi) / max(1.0, bound)))

    entry = _entry("l2_envelope", scaled, ctx.tolerances.tol_envelope_rel)
    time, margin = _worst(raw)
    return entry.model_copy(update={"worst_margin": margin, "worst_time": time})


def psi_inequality_margins(
    trajectory: Trajectory,
    params: ModelParams,
    chi_max: float,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> list[Sample]:
    """
    Margins M - 2 eta xi_k Psi_k - (Psi_{k+1} - Psi_k)/(t_{k+1} - t_k) of the
    forward-difference form of the L2 differential inequality.
    """
    constant = envelope_constant(params, chi_max, trajectory.omega_area, variant)
    records = trajectory.records

    return [
        (
            current.t,
            constant
            - 2.0 * params.eta * current.xi * current.psi
            - (following.psi - current.psi) / (following.t - current.t),
        )
        for current, following in zip(records, records[1:])
    ]


def psi_inequality_slack(
    trajectory: Trajectory,
    params: ModelParams,
    chi_max: float,
    variant: EnvelopeConstant = EnvelopeConstant.BOUND,
) -> float:
    """How far the forward differences exceed the inequality; zero if nowhere."""
    margins = psi_inequality_margins(trajectory, params, chi_max, variant)
    return max([0.0] + [-margin for _, margin in margins])


def _check_psi_inequality(ctx: _CheckContext) -> CheckEntry:
    if not ctx.starts_in_sigma:
        return _skipped("psi_inequality", "initial masses outside the trapezoid")

    samples = psi_inequality_margins(
        ctx.trajectory, ctx.params, ctx.chi_max, ctx.tolerances.envelope
    )
    return _entry("psi_inequality", samples, ctx.tolerances.tol_bound)


def _check_phi_decay(ctx: _CheckContext) -> CheckEntry:
    """
    Above the level gamma V_up, Phi must not grow between samples, and the
    analytic bound on its rate must be non-positive at every sample.
    """
    params = ctx.params
    region = sigma_region(params, ctx.trajectory.omega_area)
    level = params.gamma * region.v_up
    records = ctx.trajectory.records

    in_scope = [
        index
        for index, record in enumerate(records)
        if record.phi >= level and record.U <= region.omega_area
    ]

    samples: list[Sample] = []
    for index in in_scope:
        current = records[index]
        scale = (
            params.eta + params.gamma * params.delta
        ) * current.U + params.gamma * params.eta * current.V
        rate = phi_rate_bound(params, current.U, current.V)
        samples.append((current.t, -rate + ctx.tolerances.tol_phi_rel * scale))

        if index + 1 < len(records):
            following = records[index + 1]
            slack = ctx.tolerances.tol_phi_rel * current.phi
            samples.append((current.t, current.phi - following.phi + slack))

    return _entry("phi_decay", samples, 0.0, detail=f"level {level:.17g}")


def _check_xi_window(ctx: _CheckContext) -> CheckEntry:
    if ctx.theta is None or ctx.theta.onset_time is None:
        return _skipped("xi_window", "no settled theta estimate")

    if ctx.theta.rho != 2.0:
        return _skipped("xi_window", "theta was estimated with rho other than 2")

    lower = 1.0 - ctx.theta.theta
    samples = [
        (record.t, min(record.xi - lower, 1.0 - record.xi))
        for record in ctx.trajectory.records
        if record.t >= ctx.theta.onset_time
    ]
    return _entry(
        "xi_window",
        samples,
        ctx.tolerances.tol_bound,
        detail=f"theta {ctx.theta.theta}",
    )


def _check_crosses_one(ctx: _CheckContext) -> CheckEntry:
    if ctx.starts_below_one:
        return _skipped("crosses_one", "initial u does not exceed one")

    records = ctx.trajectory.records
    crossing = next(
        (index for index, record in enumerate(records) if record.u_max_val < 1.0),
        None,
    )

    if crossing is None:
        last = records[-1]
        return CheckEntry(
            name="crosses_one",
            statement=CHECKS["crosses_one"],
            status=CheckStatus.FAIL,
            worst_margin=1.0 - last.u_max_val,
            worst_time=last.t,
            detail="max u never dropped below one",
        )

    area = ctx.trajectory.omega_area
    samples = [
        (record.t, min(1.0 - record.u_max_val, area - record.U))
        for record in records[crossing:]
    ]
    return _entry(
        "crosses_one",
        samples,
        ctx.tolerances.tol_one,
        detail=f"crossed at t={records[crossing].t:.17g}",
    )


CHECK_FUNCTIONS: dict[str, Callable[[_CheckContext], CheckEntry]] = {
    "nonnegativity": _check_nonnegativity,
    "u_upper_bound": _check_u_upper_bound,
    "mass_bound": _check_mass_bound,
    "sigma_containment": _check_sigma,
    "l2_envelope": _check_envelope,
    "psi_inequality": _check_psi_inequality,
    "phi_decay": _check_phi_decay,
    "xi_window": _check_xi_window,
    "crosses_one": _check_crosses_one,
}


def _match_snapshots(trajectory: Trajectory, snapshots: Sequence[SimState]) -> None:
    times = trajectory.times
    for state in snapshots:
        if not any(
            math.isclose(state.t, t, rel_tol=1e-9, abs_tol=1e-12) for t in times
        ):
            raise InconsistentInputs(
                f"Snapshot at t={state.t} matches no trajectory sample."
            )
        if state.u.grid != trajectory.grid:
            raise InconsistentInputs(
                f"Snapshot at t={state.t} lives on a different grid."
            )


def check_trajectory(
    traj: Trajectory,
    snapshots: Sequence[SimState],
    params: ModelParams,
    chi: ScalarField,
    tolerances: Tolerances | None = None,
    theta: ThetaEstimate | None = None,
) -> BoundsReport:
    """
    Evaluate every enabled check over a trajectory and its field snapshots.

    Failing checks are also logged to the structured Logger.

    Args:
        traj: The diagnostics of a run.
        snapshots: Full states at a subset of the trajectory's sample times.
        params: Model parameters of the run.
        chi: The portal profile of the run.
        tolerances: Check tolerances; defaults apply when omitted.
        theta: The empirical theta of the run, needed by the xi window check.

    Returns:
        The report, one entry per enabled check.

    Raises:
        InconsistentInputs: If a snapshot matches no sample time, or the
            inputs disagree on the grid or parameters.
    """
    tolerances = tolerances or Tolerances()

    if not traj.records:
        raise InconsistentInputs("The trajectory has no samples.")

    if traj.params != params:
        raise InconsistentInputs("Trajectory and parameters come from different runs.")

    _match_snapshots(traj, snapshots)

    unknown = [name for name in tolerances.enabled if name not in CHECK_FUNCTIONS]
    if unknown:
        raise ValueError(f"Unknown checks: {', '.join(unknown)}")

    ctx = _CheckContext(
        trajectory=traj,
        snapshots=list(snapshots),
        params=params,
        chi_max=chi.max(),
        tolerances=tolerances,
        theta=theta,
    )

    entries: list[CheckEntry] = []
    for name in dict.fromkeys(tolerances.enabled):
        entry = CHECK_FUNCTIONS[name](ctx)
        entries.append(entry)

        if entry.status == CheckStatus.FAIL:
            when = entry.worst_time if entry.worst_time is not None else "-"
            Logger.log(
                {
                    "type": "bound_violation",
                    "loc": (name, when),
                    "msg": f"{entry.statement} violated",
                    "input": entry.worst_margin,
                }
            )

    return BoundsReport(entries=entries)


def _relative_change(values: Sequence[float]) -> float:
    spread = max(values) - min(values)
    if spread == 0.0:
        return 0.0

    final = abs(values[-1])
    return spread / final if final > 0.0 else math.inf


def classify_course(
    traj: Trajectory, thresholds: ClassifyThresholds | None = None
) -> Course:
    """
    Classify a finished run.

    Healing when the final U is below eps_heal |Ω|; chronic when it is not and
    U and V changed by less than stationarity_tol (relative) over the trailing
    window; undecided otherwise.
    """
    thresholds = thresholds or ClassifyThresholds()
    records = traj.records

    if not records:
        return Course.UNDECIDED

    final = records[-1]
    if final.U < thresholds.eps_heal * traj.omega_area:
        return Course.HEALING

    start = records[0].t
    window_start = final.t - thresholds.window_fraction * (final.t - start)
    window = [record for record in records if record.t >= window_start]

    if len(window) < 2:
        return Course.UNDECIDED

    change = max(
        _relative_change([record.U for record in window]),
        _relative_change([record.V for record in window]),
    )

    if change < thresholds.stationarity_tol:
        return Course.CHRONIC

    return Course.UNDECIDED
