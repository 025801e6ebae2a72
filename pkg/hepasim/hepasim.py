"""
High-level access to hepasim functionality and the command-line entry point.
"""

import argparse
import sys
from pathlib import Path
from typing import Any

from loguru import logger

sys.path.insert(0, str(Path(__file__).parent.parent))
from hepasim.config import ScenarioConfig, apply_overrides, load_config, preset
from hepasim.exceptions import HepasimError
from hepasim.functionals import EnvelopeConstant, read_trajectory
from hepasim.plotting import PlotKind, write_plot
from hepasim.scenario import BOUNDS_FILE, compute_bounds, recheck, simulate
from hepasim.sweep import (
    ERRORS_FILE,
    SUMMARY_FILE,
    AxisSpec,
    plan,
    run_sweep,
    write_summary,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2

LOG_FORMAT = "{time} | {level} | {message}"


def resolve_config(
    preset_name: str | None,
    config_file: str | None,
    overrides: dict[str, Any],
) -> ScenarioConfig:
    """
    The scenario from a config file or a preset, with CLI overrides applied.
    Without either, the healing preset is used.
    """
    if config_file is not None:
        base = load_config(config_file)
    else:
        base = preset(preset_name or "healing")

    return apply_overrides(base, overrides)


def cmd_simulate(config: ScenarioConfig) -> int:
    result = simulate(config)

    logger.info(f"Course: {result.classification}")

    if not result.report.passed:
        logger.error(f"{len(result.report.failures)} bound check(s) failed")
        return EXIT_VIOLATION

    return EXIT_OK


def cmd_bounds(config: ScenarioConfig) -> int:
    summary = compute_bounds(config)

    directory = config.output.directory
    directory.mkdir(parents=True, exist_ok=True)
    summary.write_csv(directory / BOUNDS_FILE)

    logger.info(f"V_up = {summary.v_up:.6g}, v_thr = {summary.v_thr:.6g}")
    logger.info(f"Bounds written to {directory / BOUNDS_FILE}")
    return EXIT_OK


def cmd_plot(
    trajectory_file: Path,
    kind: PlotKind,
    out: Path | None,
    variant: EnvelopeConstant,
) -> int:
    trajectory = read_trajectory(trajectory_file)
    target = out or trajectory_file.with_suffix(f".{kind}.svg")

    write_plot(trajectory, kind, target, variant)

    logger.info(f"Plot written to {target}")
    return EXIT_OK


def cmd_sweep(config: ScenarioConfig, axes: list[AxisSpec]) -> int:
    directory = config.output.directory
    rows, handler = run_sweep(config, axes, directory)

    keys = list(plan(axes)[0])
    write_summary(rows, keys, directory / SUMMARY_FILE)
    logger.info(f"Sweep summary written to {directory / SUMMARY_FILE}")

    if handler.errors:
        handler.write(directory / ERRORS_FILE)
        logger.warning(
            f"{len(handler.errors)} run(s) failed, see {directory / ERRORS_FILE}"
        )

    return EXIT_OK


def cmd_verify(directory: Path) -> int:
    report = recheck(directory)

    if not report.passed:
        logger.error(f"{len(report.failures)} bound check(s) failed")
        return EXIT_VIOLATION

    logger.info(f"All checks passed for {directory}")
    return EXIT_OK


def _add_scenario_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", help="Scenario preset: healing or chronic")
    parser.add_argument(
        "--config", help="Scenario file (.cfg/.conf/.txt, .yaml/.yml or .json)"
    )
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--nx", type=int, help="Cells in x")
    parser.add_argument("--ny", type=int, help="Cells in y")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("--t-final", type=float, help="End time")
    parser.add_argument(
        "--html-report",
        action="store_true",
        help="Also write the bounds report as bounds_report.html",
    )
    parser.add_argument(
        "--envelope-constant",
        choices=[variant.value for variant in EnvelopeConstant],
        help="Constant of the integral term of the L2 envelope",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hepasim",
        description="""
        Simulates the virus/T cell reaction-diffusion system with non-local
        inflow and checks the simulated trajectories against their analytic
        bounds.
        """,
        suggest_on_error=True,
    )
    parser.add_argument(
        "--verbose", action="store_true", help="Log per-sample progress"
    )

    subparsers = parser.add_subparsers(required=True, dest="command")

    simulation = subparsers.add_parser(
        "simulate", help="Run a scenario and check its bounds"
    )
    _add_scenario_arguments(simulation)

    bounds = subparsers.add_parser(
        "bounds", help="Compute the stationary bounds of a scenario"
    )
    _add_scenario_arguments(bounds)

    plotting = subparsers.add_parser("plot", help="Plot a trajectory as SVG")
    plotting.add_argument("--trajectory", required=True, help="Trajectory CSV")
    plotting.add_argument(
        "--kind",
        choices=[kind.value for kind in PlotKind],
        default=PlotKind.TIMESERIES.value,
    )
    plotting.add_argument("--out", help="SVG file, next to the trajectory by default")
    plotting.add_argument(
        "--envelope-constant",
        choices=[variant.value for variant in EnvelopeConstant],
        default=EnvelopeConstant.BOUND.value,
    )

    sweeping = subparsers.add_parser(
        "sweep", help="Run a scenario over a grid of parameter values"
    )
    _add_scenario_arguments(sweeping)
    sweeping.add_argument(
        "--axis",
        action="append",
        default=[],
        help="Swept key and values, e.g. model.delta=0.7,3.7; repeatable",
    )

    verification = subparsers.add_parser(
        "verify", help="Re-check the output directory of an earlier run"
    )
    verification.add_argument("--out", required=True, help="Output directory")

    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    candidates: dict[str, Any] = {
        "grid.nx": args.nx,
        "grid.ny": args.ny,
        "control.dt": args.dt,
        "control.t_final": args.t_final,
        "output.directory": args.out,
        "checks.envelope": args.envelope_constant,
        "output.html_report": True if args.html_report else None,
    }
    return {key: value for key, value in candidates.items() if value is not None}


def dispatch(args: argparse.Namespace) -> int:
    match args.command:
        case "plot":
            return cmd_plot(
                Path(args.trajectory),
                PlotKind(args.kind),
                Path(args.out) if args.out else None,
                EnvelopeConstant(args.envelope_constant),
            )
        case "verify":
            return cmd_verify(Path(args.out))
        case _:
            pass

    config = resolve_config(args.preset, args.config, _overrides(args))

    match args.command:
        case "simulate":
            return cmd_simulate(config)
        case "bounds":
            return cmd_bounds(config)
        case "sweep":
            return cmd_sweep(config, [AxisSpec.parse(axis) for axis in args.axis])
        case _:
            raise ValueError(f"Unknown command {args.command}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level="DEBUG" if args.verbose else "INFO")

    logger.info(f"Starting hepasim {args.command}")

    # Top-level try/except so that every failure maps to an exit code.
    e: Exception
    try:
        code = dispatch(args)
    except HepasimError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR
    except Exception as e:
        logger.error(f"Error running {args.command}, {e}")
        return EXIT_ERROR

    logger.info("Stopping hepasim.")
    return code


if __name__ == "__main__":
    sys.exit(main())
