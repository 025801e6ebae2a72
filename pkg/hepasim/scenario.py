"""
Runs a configured scenario end to end: simulation, snapshots, checks,
classification and the files they produce. The CLI and the sweep both drive
scenarios through this module.
"""

import csv
import json
import math
from pathlib import Path

from loguru import logger
from pydantic import BaseModel, ConfigDict

from hepasim._logging import Logger
from hepasim.config import ScenarioConfig, load_config, write_config
from hepasim.elliptic import solve_aux, v_threshold
from hepasim.exceptions import InconsistentInputs, NoValidSamples, ParseError
from hepasim.functionals import (
    DiagnosticsRecord,
    EnvelopeConstant,
    ThetaEstimate,
    Trajectory,
    envelope_constant,
    linf_bound_ingredients,
    psi_estimates,
    read_trajectory,
    sigma_region,
    summarize_theta,
    theta_from_trajectory,
    theta_ratio,
    v_up,
    write_trajectory,
)
from hepasim.grid import (
    Grid,
    PortalField,
    ScalarField,
    build_chi,
    quadrature,
    read_snapshot,
    write_snapshot,
)
from hepasim.integrator import SimState, dt_max, run
from hepasim.model import growth_rate_bound, growth_rate_min
from hepasim.verify import BoundsReport, Course, check_trajectory, classify_course

SCENARIO_FILE = "scenario.cfg"
TRAJECTORY_FILE = "trajectory.csv"
SNAPSHOT_INDEX = "snapshots.csv"
REPORT_TEXT = "bounds_report.txt"
REPORT_CSV = "bounds_report.csv"
REPORT_HTML = "bounds_report.html"
VIOLATIONS_FILE = "violations.json"
BOUNDS_FILE = "bounds.csv"

REFERENCE_TOL = 1e-3


class SimulationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    config: ScenarioConfig
    trajectory: Trajectory
    report: BoundsReport
    theta: ThetaEstimate | None
    directory: Path

    @property
    def classification(self) -> Course | None:
        return self.report.classification


class BoundsSummary(BaseModel):
    """
    The stationary quantities of a scenario, computed without time stepping.

    Attributes:
        v_thr: Minimum of the auxiliary solution over the portal cells
        aux_integral: eta times the integral of the auxiliary solution, one
            up to solver accuracy
        max_vstar: Maximum of the zero-mean solution v*
        linf_ingredient: delta |Ω| max v*
        v_up: Upper value of the total T cell amount
        v_up_reference: The published value, if the scenario carries one
        sigma_vertices: Corners of the trapezoid in the (U, V) plane
    """

    model_config = ConfigDict(frozen=True)

    v_thr: float
    aux_integral: float
    max_vstar: float
    linf_ingredient: float
    v_up: float
    v_up_reference: float | None
    sigma_vertices: list[tuple[float, float]]
    growth_rate_min: float
    growth_rate_bound: float
    envelope_bound: float
    envelope_printed: float
    dt_max_initial: float

    @property
    def reference_matches(self) -> bool | None:
        if self.v_up_reference is None:
            return None
        return abs(self.v_up - self.v_up_reference) <= REFERENCE_TOL

    def rows(self) -> list[tuple[str, str]]:
        values: list[tuple[str, float | None]] = [
            ("v_thr", self.v_thr),
            ("aux_integral", self.aux_integral),
            ("max_vstar", self.max_vstar),
            ("linf_ingredient", self.linf_ingredient),
            ("v_up", self.v_up),
            ("v_up_reference", self.v_up_reference),
            ("growth_rate_min", self.growth_rate_min),
            ("growth_rate_bound", self.growth_rate_bound),
            ("envelope_constant_bound", self.envelope_bound),
            ("envelope_constant_printed", self.envelope_printed),
            ("dt_max_initial", self.dt_max_initial),
        ]
        for index, (u, v) in enumerate(self.sigma_vertices):
            values += [(f"sigma_vertex_{index}_U", u), (f"sigma_vertex_{index}_V", v)]

        rows = [
            (name, "-" if value is None else f"{value:.17g}") for name, value in values
        ]

        matches = self.reference_matches
        rows.append(
            ("v_up_matches_reference", "-" if matches is None else str(matches).lower())
        )
        return rows

    def write_csv(self, path: Path) -> None:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["quantity", "value"])
            writer.writerows(self.rows())


def initial_state(config: ScenarioConfig, grid: Grid) -> SimState:
    """
    The initial pair from the config: snapshot files where given, constants
    otherwise.
    """

    def species(path: Path | None, value: float) -> ScalarField:
        if path is not None:
            return read_snapshot(path, grid)
        return ScalarField.constant(grid, value)

    return SimState(
        t=0.0,
        u=species(config.initial.u_file, config.initial.u0),
        v=species(config.initial.v_file, config.initial.v0),
    )


def _check_reference(config: ScenarioConfig, computed: float) -> None:
    reference = config.reference.v_up
    if reference is not None and abs(computed - reference) > REFERENCE_TOL:
        logger.warning(
            f"V_up from the formula is {computed:.6g}, the scenario's published "
            f"value is {reference:.6g}"
        )


def _snapshot_paths(directory: Path, index: int) -> tuple[Path, Path]:
    return (
        directory / f"snapshot_{index:03d}_u.csv",
        directory / f"snapshot_{index:03d}_v.csv",
    )


def read_snapshots(directory: Path, grid: Grid) -> list[SimState]:
    """
    The snapshots listed in the index file of an output directory.

    Raises:
        ParseError: If the index or a snapshot file is malformed.
    """
    index = directory / SNAPSHOT_INDEX
    if not index.exists():
        return []

    with index.open(encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))

    if not rows or rows[0] != ["t", "u_file", "v_file"]:
        raise ParseError(f"{index} does not have the header t,u_file,v_file.")

    states: list[SimState] = []
    for row in rows[1:]:
        try:
            t, u_name, v_name = row
            time = float(t)
        except ValueError as e:
            raise ParseError(f"{index}: malformed row {row}") from e

        states.append(
            SimState(
                t=time,
                u=read_snapshot(directory / u_name, grid),
                v=read_snapshot(directory / v_name, grid),
            )
        )

    return states


def _evaluate(
    config: ScenarioConfig,
    trajectory: Trajectory,
    snapshots: list[SimState],
    chi: PortalField,
    theta: ThetaEstimate | None,
    directory: Path,
) -> BoundsReport:
    with Logger.context() as logs:
        report = check_trajectory(
            trajectory, snapshots, config.model, chi, config.checks, theta
        )

        if logs:
            violations = directory / VIOLATIONS_FILE
            violations.write_text(json.dumps(logs, indent=2), encoding="utf-8")
            logger.info(f"Bound violations written to {violations}")

    estimates: dict[str, float] = {}
    if theta is not None:
        estimates = psi_estimates(trajectory, theta, config.checks.envelope)

    report = report.model_copy(
        update={
            "classification": classify_course(trajectory, config.classify),
            "estimates": estimates,
        }
    )

    report.write_text(directory / REPORT_TEXT)
    report.write_csv(directory / REPORT_CSV)

    if config.output.html_report:
        report.write_html(directory / REPORT_HTML)

    for entry in report.failures:
        logger.error(
            f"Check {entry.name} failed: worst margin {entry.worst_margin} "
            f"at t={entry.worst_time}"
        )

    return report


def simulate(config: ScenarioConfig) -> SimulationResult:
    """
    Run a scenario and write its trajectory, snapshots and bounds report to
    the configured output directory.

    Raises:
        HepasimError: From any stage of the run.
    """
    grid = config.grid
    chi = build_chi(grid, config.portal)
    initial = initial_state(config, grid)

    directory = config.output.directory
    directory.mkdir(parents=True, exist_ok=True)
    write_config(config, directory / SCENARIO_FILE)

    _check_reference(config, v_up(config.model, grid.area))

    pending = sorted(config.output.snapshot_times)
    snapshots: list[SimState] = []
    index_rows: list[list[str]] = []
    ratios: list[tuple[float, float | None]] = []

    def sink(record: DiagnosticsRecord, state: SimState) -> None:
        ratios.append((state.t, theta_ratio(state, config.checks.rho)))

        due = [
            t
            for t in pending
            if math.isclose(t, record.t, rel_tol=1e-9, abs_tol=1e-12)
        ]
        if not due:
            return

        for t in due:
            pending.remove(t)

        u_path, v_path = _snapshot_paths(directory, len(snapshots))
        write_snapshot(state.u, u_path)
        write_snapshot(state.v, v_path)
        snapshots.append(state)
        index_rows.append([f"{state.t:.17g}", u_path.name, v_path.name])

    trajectory = run(initial, config.model, chi, config.control, sink)

    for t in pending:
        logger.warning(f"Snapshot time {t} is not a sample time; no snapshot written")

    with (directory / SNAPSHOT_INDEX).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", "u_file", "v_file"])
        writer.writerows(index_rows)

    write_trajectory(trajectory, directory / TRAJECTORY_FILE)
    logger.info(f"Trajectory written to {directory / TRAJECTORY_FILE}")

    try:
        theta = summarize_theta(ratios, config.checks.rho)
    except NoValidSamples:
        logger.info("No sample with a non-degenerate T cell mass; theta undefined")
        theta = None

    report = _evaluate(config, trajectory, snapshots, chi, theta, directory)

    return SimulationResult(
        config=config,
        trajectory=trajectory,
        report=report,
        theta=theta,
        directory=directory,
    )


def recheck(directory: Path) -> BoundsReport:
    """
    Re-run the checks over an existing output directory without simulating.

    Raises:
        ConfigError, ParseError: If the directory's files are missing or
            malformed.
        InconsistentInputs: If the files do not come from the same run.
    """
    config = load_config(directory / SCENARIO_FILE)
    trajectory = read_trajectory(directory / TRAJECTORY_FILE)

    if trajectory.grid != config.grid:
        raise InconsistentInputs(
            "The trajectory and the scenario disagree on the grid."
        )

    snapshots = read_snapshots(directory, trajectory.grid)
    chi = build_chi(trajectory.grid, config.portal)

    theta: ThetaEstimate | None = None
    if config.checks.rho == 2.0:
        try:
            theta = theta_from_trajectory(trajectory)
        except NoValidSamples:
            theta = None
    else:
        logger.info("Theta is only recoverable from diagnostics for rho = 2")

    return _evaluate(config, trajectory, snapshots, chi, theta, directory)


def compute_bounds(config: ScenarioConfig) -> BoundsSummary:
    """
    Solve the stationary problems of a scenario and collect its analytic
    bounds.

    Raises:
        EmptyPortal, NoConvergence, InvariantViolation, SolvabilityViolated:
            From the stationary solves.
    """
    grid = config.grid
    params = config.model
    chi = build_chi(grid, config.portal)

    aux = solve_aux(grid, chi, params)
    max_vstar, ingredient = linf_bound_ingredients(params, chi, grid)

    upper = v_up(params, grid.area)
    _check_reference(config, upper)

    return BoundsSummary(
        v_thr=v_threshold(aux, chi.mask),
        aux_integral=params.eta * quadrature(aux.field),
        max_vstar=max_vstar,
        linf_ingredient=ingredient,
        v_up=upper,
        v_up_reference=config.reference.v_up,
        sigma_vertices=sigma_region(params, grid.area).vertices(),
        growth_rate_min=growth_rate_min(params),
        growth_rate_bound=growth_rate_bound(params),
        envelope_bound=envelope_constant(
            params, chi.max(), grid.area, EnvelopeConstant.BOUND
        ),
        envelope_printed=envelope_constant(
            params, chi.max(), grid.area, EnvelopeConstant.PRINTED
        ),
        dt_max_initial=dt_max(params, chi, initial_state(config, grid)),
    )
