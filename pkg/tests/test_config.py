"""
Tests hepasim/config.py and hepasim/file_handler.py
"""

import json
from pathlib import Path

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from hepasim.config import (
    PRESETS,
    ScenarioConfig,
    apply_overrides,
    dump_config,
    load_config,
    preset,
    validate_config,
    write_config,
)
from hepasim.exceptions import ConfigError, UnknownPreset
from hepasim.file_handler import JSONObject, KeyValueLoader, load_file, set_dotted
from hepasim.functionals import EnvelopeConstant
from hepasim.grid import Grid, ScalarField, write_snapshot
from hepasim.model import ModelParams
from tests.strategies import model_params, positive

NESTED = {
    "name": "example",
    "grid": {"nx": 32, "ny": 16},
    "model": {"delta": 1.5},
    "control": {"dt": 0.002, "t_final": 1.0},
    "output": {"snapshot_times": [0.0, 0.5]},
    "checks": {"enabled": ["mass_bound", "sigma_containment"]},
}

FLAT = """\
# an example scenario
name = example
grid.nx = 32
grid.ny = 16
model.delta = 1.5

control.dt = 0.002
control.t_final = 1.0
output.snapshot_times = 0.0, 0.5
checks.enabled = mass_bound, sigma_containment
"""


def test_presets():
    healing = preset("healing")
    chronic = preset("chronic")

    assert healing.model == ModelParams()
    assert healing.control.t_final == 10.0
    assert healing.reference.v_up == 19.833
    assert chronic.model.delta == 0.7
    assert chronic.model.eta == 0.9
    assert chronic.control.t_final == 30.0
    assert set(PRESETS) == {"healing", "chronic"}


def test_unknown_preset():
    with pytest.raises(UnknownPreset, match="chronic, healing"):
        preset("acute")


def test_defaults():
    config = ScenarioConfig()

    assert config.grid == Grid()
    assert config.initial.u0 == 1.0
    assert config.initial.v0 == 0.0
    assert config.checks.envelope == EnvelopeConstant.BOUND
    assert config.output.snapshot_times == []


@pytest.mark.parametrize(
    ("suffix", "content"),
    [
        (".cfg", FLAT),
        (".json", json.dumps(NESTED)),
        (".yaml", yaml.safe_dump(NESTED)),
    ],
)
def test_every_format_gives_the_same_config(
    tmp_path: Path, suffix: str, content: str
):
    path = tmp_path / f"scenario{suffix}"
    path.write_text(content, encoding="utf-8")

    assert load_config(path) == validate_config(NESTED)


@settings(max_examples=25)
@given(
    model_params(),
    st.integers(min_value=4, max_value=256),
    positive(1e-5, 1e-2),
    st.lists(positive(0.0, 100.0), max_size=4),
    st.booleans(),
)
def test_dump_and_load_are_inverse(
    params: ModelParams,
    nx: int,
    dt: float,
    times: list[float],
    html: bool,
):
    config = validate_config(
        {
            "grid": {"nx": nx},
            "model": params.model_dump(),
            "control": {"dt": dt},
            "output": {"snapshot_times": times, "html_report": html},
        }
    )

    assert validate_config(KeyValueLoader().load(dump_config(config))) == config


def test_written_config_loads_back(tmp_path: Path):
    config = preset("chronic")
    path = tmp_path / "scenario.cfg"

    write_config(config, path)

    assert path.read_text(encoding="utf-8").startswith("# hepasim scenario chronic\n")
    assert load_config(path) == config


@pytest.mark.parametrize(
    "data",
    [
        {"grid": {"nx": 2}},
        {"model": {"u_min": 1.5}},
        {"control": {"dt": -1.0}},
        {"initial": {"u0": -1.0}},
        {"output": {"snapshot_times": "0.0, soon"}},
        {"checks": {"envelope": "sharp"}},
        {"unknown_section": {"a": 1}},
        {"initial": {"w0": 1.0}},
    ],
)
def test_invalid_config(data: dict[str, object]):
    with pytest.raises(ConfigError, match="Invalid scenario configuration"):
        validate_config(data)


def test_invalid_config_names_the_key():
    with pytest.raises(ConfigError, match=r"grid\.nx"):
        validate_config({"grid": {"nx": 1}})


def test_config_file_errors(tmp_path: Path):
    with pytest.raises(ConfigError, match="File not found"):
        load_config(tmp_path / "absent.cfg")

    unknown = tmp_path / "scenario.toml"
    unknown.write_text("a = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="No suitable loader"):
        load_config(unknown)

    broken = tmp_path / "scenario.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="Failed to parse"):
        load_config(broken)

    listing = tmp_path / "scenario.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(listing)

    garbled = tmp_path / "scenario.cfg"
    garbled.write_text("grid.nx 32\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="Line 1"):
        load_config(garbled)


def test_initial_files_are_resolved_against_the_config(tmp_path: Path):
    grid = Grid(nx=8, ny=8)
    write_snapshot(ScalarField.constant(grid, 0.5), tmp_path / "u0.csv")

    path = tmp_path / "scenario.cfg"
    path.write_text("grid.nx = 8\ngrid.ny = 8\ninitial.u_file = u0.csv\n")

    config = load_config(path)

    assert config.initial.u_file == tmp_path / "u0.csv"


def test_missing_initial_file(tmp_path: Path):
    path = tmp_path / "scenario.cfg"
    path.write_text("initial.v_file = v0.csv\n", encoding="utf-8")

    with pytest.raises(ConfigError, match="v0.csv"):
        load_config(path)


def test_overrides():
    config = apply_overrides(
        preset("healing"),
        {"grid.nx": 16, "model.delta": "2.5", "checks.enabled": "mass_bound"},
    )

    assert config.grid.nx == 16
    assert config.model.delta == 2.5
    assert config.checks.enabled == ["mass_bound"]
    assert config.control == preset("healing").control
    assert apply_overrides(config, {}) is config


def test_override_into_a_value():
    with pytest.raises(ConfigError):
        apply_overrides(preset("healing"), {"name.first": "x"})


def test_set_dotted():
    data: JSONObject = {}
    set_dotted(data, "a.b.c", 1)
    set_dotted(data, "a.d", 2)

    assert data == {"a": {"b": {"c": 1}, "d": 2}}


def test_empty_yaml_is_an_empty_config(tmp_path: Path):
    path = tmp_path / "scenario.yml"
    path.write_text("", encoding="utf-8")

    assert load_file(path) == {}
    assert load_config(path) == ScenarioConfig()
