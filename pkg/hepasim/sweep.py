"""
Parameter sweeps: every combination of the axis values is run as an
independent scenario in its own directory, and the outcomes are collected in
one summary CSV.
"""

import csv
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from hepasim._error_handler import ErrorHandler
from hepasim.config import ScenarioConfig, apply_overrides
from hepasim.exceptions import ConfigError, HepasimError
from hepasim.scenario import simulate
from hepasim.verify import CHECKS

THREADS_ENV = "HEPASIM_THREADS"
SUMMARY_FILE = "summary.csv"
ERRORS_FILE = "errors.json"


class AxisSpec(BaseModel):
    """One swept key and its values, as given on the command line."""

    model_config = ConfigDict(frozen=True)

    key: str = Field(min_length=1)
    values: list[str]

    @classmethod
    def parse(cls, text: str) -> AxisSpec:
        """
        Parse `key=v1,v2,...`.

        Example:
            >>> AxisSpec.parse("model.delta=0.7,3.7")
            AxisSpec(key='model.delta', values=['0.7', '3.7'])

        Raises:
            ConfigError: If the text has no `=`.
        """
        key, separator, values = text.partition("=")

        if not separator or not key.strip():
            raise ConfigError(f"Axis {text!r} is not of the form key=v1,v2,...")

        return cls(
            key=key.strip(),
            values=[value.strip() for value in values.split(",") if value.strip()],
        )


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    run: str
    overrides: dict[str, str]
    classification: str | None = None
    final_U: float | None = None
    final_V: float | None = None
    margins: dict[str, float | None] = Field(default_factory=dict)
    error_type: str | None = None
    error: str | None = None


def sweep_threads() -> int:
    """
    Worker count: HEPASIM_THREADS if set, the CPU count otherwise.

    Raises:
        ConfigError: If HEPASIM_THREADS is not a positive integer.
    """
    raw = os.environ.get(THREADS_ENV)

    if raw is None:
        return os.cpu_count() or 1

    try:
        threads = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer.") from e

    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1, got {threads}.")

    return threads


def plan(axes: list[AxisSpec]) -> list[dict[str, str]]:
    """
    The override sets of a sweep, one per combination. Axes without values
    are ignored, so a sweep without axes is a single run of the template.

    Example:
        >>> plan([AxisSpec.parse("a=1,2"), AxisSpec.parse("b=x")])
        [{'a': '1', 'b': 'x'}, {'a': '2', 'b': 'x'}]
    """
    active = [axis for axis in axes if axis.values]
    keys = [axis.key for axis in active]

    return [
        dict(zip(keys, combination, strict=True))
        for combination in itertools.product(*(axis.values for axis in active))
    ]


def run_one(
    run: str, template: ScenarioConfig, overrides: dict[str, str], directory: Path
) -> SweepRow:
    """Run one combination; failures are returned in the row, not raised."""
    try:
        config = apply_overrides(
            template, {**overrides, "output.directory": str(directory)}
        )
        result = simulate(config)
    except HepasimError as e:
        return SweepRow(
            run=run, overrides=overrides, error_type=type(e).__name__, error=str(e)
        )

    final = result.trajectory.records[-1]

    return SweepRow(
        run=run,
        overrides=overrides,
        classification=result.classification,
        final_U=final.U,
        final_V=final.V,
        margins={entry.name: entry.worst_margin for entry in result.report.entries},
    )


def run_sweep(
    template: ScenarioConfig,
    axes: list[AxisSpec],
    directory: Path,
    threads: int | None = None,
) -> tuple[list[SweepRow], ErrorHandler]:
    """
    Run every combination of the axes concurrently.

    Each run writes to `<directory>/run-NNN`. Rows come back in plan order.
    """
    combinations = plan(axes)
    workers = min(threads or sweep_threads(), len(combinations))
    directory.mkdir(parents=True, exist_ok=True)

    logger.info(f"Sweeping {len(combinations)} runs on {workers} workers")

    handler = ErrorHandler()
    rows: list[SweepRow] = []

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            (
                f"run-{index:03d}",
                overrides,
                pool.submit(
                    run_one,
                    f"run-{index:03d}",
                    template,
                    overrides,
                    directory / f"run-{index:03d}",
                ),
            )
            for index, overrides in enumerate(combinations)
        ]

        for run, overrides, future in futures:
            try:
                row = future.result()
            except Exception as e:
                handler.register_exception(run, e)
                rows.append(
                    SweepRow(
                        run=run,
                        overrides=overrides,
                        error_type=type(e).__name__,
                        error=str(e),
                    )
                )
                continue

            if row.error is not None:
                handler.register_log(
                    {"type": row.error_type or "error", "loc": (run,), "msg": row.error}
                )
            rows.append(row)

    handler.deduplicate()
    return rows, handler


def write_summary(rows: list[SweepRow], keys: list[str], path: Path) -> None:
    def cell(value: float | str | None) -> str:
        if value is None:
            return ""
        return f"{value:.17g}" if isinstance(value, float) else value

    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            ["run", *keys, "classification", "final_U", "final_V"]
            + [f"margin_{name}" for name in CHECKS]
            + ["error"]
        )

        for row in rows:
            writer.writerow(
                [row.run]
                + [row.overrides.get(key, "") for key in keys]
                + [cell(row.classification), cell(row.final_U), cell(row.final_V)]
                + [cell(row.margins.get(name)) for name in CHECKS]
                + [cell(row.error)]
            )
