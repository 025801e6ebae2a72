"""
Scenario configuration: the validated model tree, the named presets, CLI
overrides and the flat `key = value` writer.
"""

from collections.abc import Mapping
from enum import Enum
from pathlib import Path
from typing import Annotated, Any

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
)

from hepasim.exceptions import ConfigError, UnknownPreset
from hepasim.file_handler import JSONObject, load_file, set_dotted
from hepasim.grid import Grid, PortalSpec
from hepasim.integrator import StepControl
from hepasim.model import ModelParams
from hepasim.verify import ClassifyThresholds, Tolerances


def _split_items(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FloatList = Annotated[list[float], BeforeValidator(_split_items)]
NameList = Annotated[list[str], BeforeValidator(_split_items)]


class InitialSpec(BaseModel):
    """
    Initial data: constants, or snapshot files written by `write_snapshot`.
    A file, when given, takes precedence over the constant.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    u0: float = Field(default=1.0, ge=0.0, allow_inf_nan=False)
    v0: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    u_file: Path | None = None
    v_file: Path | None = None


class OutputSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: Path = Path("hepasim-out")
    snapshot_times: FloatList = Field(default_factory=list)
    html_report: bool = False


class ChecksSpec(Tolerances):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: NameList = Field(default_factory=lambda: list(Tolerances().enabled))


class ReferenceSpec(BaseModel):
    """Published values the computed bounds are compared against."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    v_up: float | None = None


class ScenarioConfig(BaseModel):
    """
    Everything needed to run, check and report one scenario.

    Example:
        >>> preset("chronic").model.delta
        0.7
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "custom"
    grid: Grid = Field(default_factory=Grid)
    portal: PortalSpec = Field(default_factory=PortalSpec)
    model: ModelParams = Field(default_factory=ModelParams)
    control: StepControl = Field(default_factory=StepControl)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    checks: ChecksSpec = Field(default_factory=ChecksSpec)
    classify: ClassifyThresholds = Field(default_factory=ClassifyThresholds)
    reference: ReferenceSpec = Field(default_factory=ReferenceSpec)

    def missing_files(self) -> list[Path]:
        files = (self.initial.u_file, self.initial.v_file)
        return [path for path in files if path is not None and not path.is_file()]


PRESETS: dict[str, JSONObject] = {
    "healing": {
        "name": "healing",
        "control": {"t_final": 10.0, "snapshot_every": 10},
        "initial": {"u0": 1.0, "v0": 0.0},
        "output": {"snapshot_times": [0.0, 1.0, 5.0, 10.0]},
        "reference": {"v_up": 19.833},
    },
    "chronic": {
        "name": "chronic",
        "model": {"delta": 0.7, "eta": 0.9},
        "control": {"t_final": 30.0, "snapshot_every": 10},
        "initial": {"u0": 1.0, "v0": 0.0},
        "output": {"snapshot_times": [0.0, 10.0, 30.0]},
        "reference": {"v_up": 4.0},
    },
}


def validate_config(data: Mapping[str, Any]) -> ScenarioConfig:
    """
    Validate a nested mapping into a ScenarioConfig.

    Raises:
        ConfigError: Listing the offending dotted keys.
    """
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
            for error in e.errors()
        )
        raise ConfigError(f"Invalid scenario configuration: {problems}") from e


def preset(name: str) -> ScenarioConfig:
    """
    A fully populated preset scenario.

    Raises:
        UnknownPreset: If `name` is not a known preset.
    """
    if name not in PRESETS:
        raise UnknownPreset(
            f"Unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}."
        )

    return validate_config(PRESETS[name])


def apply_overrides(
    config: ScenarioConfig, overrides: Mapping[str, Any]
) -> ScenarioConfig:
    """
    Apply dotted-key overrides such as {"grid.nx": 128} and revalidate.

    Example:
        >>> apply_overrides(preset("healing"), {"grid.nx": 32}).grid.nx
        32
    """
    if not overrides:
        return config

    data: JSONObject = config.model_dump(mode="json")
    for key, value in overrides.items():
        set_dotted(data, key, value)

    return validate_config(data)


def _resolve_files(data: JSONObject, base: Path) -> None:
    initial = data.get("initial")
    if not isinstance(initial, dict):
        return

    for key in ("u_file", "v_file"):
        value = initial.get(key)
        if isinstance(value, str) and value and not Path(value).is_absolute():
            initial[key] = str(base / value)


def load_config(path: str | Path) -> ScenarioConfig:
    """
    Load and validate a scenario file. Relative initial-data paths are
    resolved against the directory of the file.

    Raises:
        ConfigError: If the file cannot be parsed, fails validation or
            references missing files.
    """
    source = Path(path)
    data = load_file(source)
    _resolve_files(data, source.parent)

    config = validate_config(data)

    missing = config.missing_files()
    if missing:
        raise ConfigError(
            f"Initial data files not found: {', '.join(str(p) for p in missing)}"
        )

    return config


def _format_value(value: Any) -> str:
    match value:
        case bool():
            return "true" if value else "false"
        case float():
            return repr(value)
        case Enum():
            return str(value.value)
        case list():
            items: list[Any] = value
            return ", ".join(_format_value(item) for item in items)
        case _:
            return str(value)


def _flatten(data: Mapping[str, Any], prefix: str = "") -> list[tuple[str, Any]]:
    items: list[tuple[str, Any]] = []

    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            section: Mapping[str, Any] = value
            items.extend(_flatten(section, f"{dotted}."))
        elif value is not None:
            items.append((dotted, value))

    return items


def dump_config(config: ScenarioConfig) -> str:
    """
    The flat `key = value` form of a config.

    Floats are written with their shortest round-trip representation, so
    loading the output gives back an identical config.
    """
    lines = [f"# hepasim scenario {config.name}"]
    lines += [
        f"{key} = {_format_value(value)}"
        for key, value in _flatten(config.model_dump())
    ]
    return "\n".join(lines) + "\n"


def write_config(config: ScenarioConfig, path: Path) -> None:
    path.write_text(dump_config(config), encoding="utf-8", newline="\n")
