"""
Tests hepasim/sweep.py
"""

import csv
import os
from pathlib import Path

import pytest

from hepasim.config import ScenarioConfig, validate_config
from hepasim.exceptions import ConfigError
from hepasim.sweep import (
    THREADS_ENV,
    AxisSpec,
    SweepRow,
    plan,
    run_sweep,
    sweep_threads,
    write_summary,
)
from hepasim.verify import CHECKS


def small_template(directory: Path) -> ScenarioConfig:
    return validate_config(
        {
            "grid": {"nx": 8, "ny": 8},
            "control": {"dt": 1e-3, "t_final": 0.05, "snapshot_every": 10},
            "output": {"directory": str(directory), "snapshot_times": [0.0, 0.05]},
        }
    )


def test_parse_axis():
    axis = AxisSpec.parse(" model.delta = 0.7, 3.7 ,")

    assert axis.key == "model.delta"
    assert axis.values == ["0.7", "3.7"]


@pytest.mark.parametrize("text", ["model.delta", "=1,2", ""])
def test_malformed_axis(text: str):
    with pytest.raises(ConfigError):
        AxisSpec.parse(text)


def test_plan_is_the_product_of_the_axes():
    axes = [
        AxisSpec.parse("model.delta=0.7,2,3.7"),
        AxisSpec.parse("model.eta=0.2,0.5,0.9"),
    ]

    combinations = plan(axes)

    assert len(combinations) == 9
    assert combinations[0] == {"model.delta": "0.7", "model.eta": "0.2"}
    assert combinations[-1] == {"model.delta": "3.7", "model.eta": "0.9"}


def test_plan_without_axes_is_one_run():
    assert plan([]) == [{}]
    assert plan([AxisSpec(key="model.delta", values=[])]) == [{}]


def test_threads_from_the_environment(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert sweep_threads() == 3

    monkeypatch.delenv(THREADS_ENV)
    assert sweep_threads() == (os.cpu_count() or 1)


@pytest.mark.parametrize("value", ["0", "-2", "many"])
def test_invalid_thread_count(monkeypatch: pytest.MonkeyPatch, value: str):
    monkeypatch.setenv(THREADS_ENV, value)

    with pytest.raises(ConfigError, match=THREADS_ENV):
        sweep_threads()


def test_summary_columns(tmp_path: Path):
    rows = [
        SweepRow(
            run="run-000",
            overrides={"model.delta": "0.7"},
            classification="undecided",
            final_U=0.5,
            final_V=0.25,
            margins={"mass_bound": 0.5, "xi_window": None},
        ),
        SweepRow(
            run="run-001",
            overrides={"model.delta": "-1"},
            error_type="ConfigError",
            error="Invalid scenario configuration",
        ),
    ]
    path = tmp_path / "summary.csv"

    write_summary(rows, ["model.delta"], path)

    with path.open(encoding="utf-8", newline="") as f:
        header, first, second = list(csv.reader(f))

    assert header == (
        ["run", "model.delta", "classification", "final_U", "final_V"]
        + [f"margin_{name}" for name in CHECKS]
        + ["error"]
    )
    assert first[:5] == ["run-000", "0.7", "undecided", "0.5", "0.25"]
    assert first[header.index("margin_mass_bound")] == "0.5"
    assert first[header.index("margin_xi_window")] == ""
    assert second[-1] == "Invalid scenario configuration"
    assert second[2] == ""


def test_sweep_runs_every_combination(tmp_path: Path):
    axes = [AxisSpec.parse("model.delta=0.7,3.7,-1")]

    rows, handler = run_sweep(small_template(tmp_path), axes, tmp_path, threads=2)

    assert [row.run for row in rows] == ["run-000", "run-001", "run-002"]
    assert [row.overrides["model.delta"] for row in rows] == ["0.7", "3.7", "-1"]

    for row in rows[:2]:
        assert row.error is None
        assert row.classification is not None
        assert row.final_U is not None and 0.0 < row.final_U <= 1.0
        assert (tmp_path / row.run / "trajectory.csv").is_file()
        assert all(
            margin is None or margin >= -1e-8
            for name, margin in row.margins.items()
            if name != "phi_decay"
        )

    assert rows[2].error_type == "ConfigError"
    assert handler.errors == [
        {"type": "ConfigError", "loc": ("run-002",), "msg": rows[2].error}
    ]
