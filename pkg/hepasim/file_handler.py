"""
Scenario configuration loading with format detection by suffix.

Every loader produces the same nested mapping of sections to values, which is
validated by ScenarioConfig afterwards.

Supported File Types:
    - key = value: .cfg, .conf, .txt, with dotted section prefixes
    - JSON: .json
    - YAML: .yaml, .yml
"""

import json
from abc import ABC, abstractmethod
from pathlib import Path

import yaml

from hepasim.exceptions import ConfigError

type JSONPrimitive = str | int | float | bool | None
type JSONArray = list["JSONValue"]
type JSONObject = dict[str, "JSONValue"]
type JSONValue = JSONPrimitive | JSONArray | JSONObject


class FileLoader(ABC):
    """Abstract base class for config loaders."""

    @abstractmethod
    def can_handle(self, file_path: Path) -> bool:
        """Check if this loader can handle the given file.

        Args:
            file_path: Path to the file to check.

        Returns:
            True if this loader can handle the file, False otherwise.
        """

    @abstractmethod
    def load(self, content: str) -> JSONObject:
        """Parse the file content into a nested mapping.

        Args:
            content: The raw file content as a string.

        Returns:
            The parsed content as a JSONObject.
        """


class KeyValueLoader(FileLoader):
    """
    Loader for flat `section.key = value` files.

    Blank lines and lines starting with `#` are ignored. Values stay strings;
    list-valued keys are split on commas during validation.

    Example:
        >>> KeyValueLoader().load("# grid\\ngrid.nx = 32\\nname = healing\\n")
        {'grid': {'nx': '32'}, 'name': 'healing'}
    """

    def can_handle(self, file_path: Path) -> bool:
        return file_path.suffix.lower() in {".cfg", ".conf", ".txt"}

    def load(self, content: str) -> JSONObject:
        data: JSONObject = {}

        for number, raw in enumerate(content.splitlines(), start=1):
            line = raw.strip()

            if not line or line.startswith("#"):
                continue

            key, separator, value = line.partition("=")
            if not separator or not key.strip():
                raise ConfigError(
                    f"Line {number}: expected `key = value`, got {raw!r}."
                )

            set_dotted(data, key.strip(), value.strip())

        return data


class JSONLoader(FileLoader):
    """Loader for JSON files."""

    def can_handle(self, file_path: Path) -> bool:
        return file_path.suffix.lower() == ".json"

    def load(self, content: str) -> JSONObject:
        return json.loads(content)


class YAMLLoader(FileLoader):
    """Loader for YAML files."""

    def can_handle(self, file_path: Path) -> bool:
        return file_path.suffix.lower() in {".yaml", ".yml"}

    def load(self, content: str) -> JSONObject:
        return yaml.safe_load(content) or {}


def set_dotted(data: JSONObject, key: str, value: JSONValue) -> None:
    """
    Set `value` at the dotted path `key`, creating sections as needed.

    Raises:
        ConfigError: If a prefix of `key` already holds a plain value.
    """
    *sections, leaf = key.split(".")
    target = data

    for section in sections:
        child = target.setdefault(section, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key}: {section} is a value, not a section.")
        target = child

    target[leaf] = value


class FileProcessor:
    """Selects a loader by file suffix and parses a config file.

    Attributes:
        loaders: Available loaders, tried in order.
    """

    def __init__(self) -> None:
        self.loaders: list[FileLoader] = [KeyValueLoader(), JSONLoader(), YAMLLoader()]

    def _get_appropriate_loader(self, file_path: Path) -> FileLoader:
        for loader in self.loaders:
            if loader.can_handle(file_path):
                return loader

        raise ConfigError(f"No suitable loader found for file: {file_path}")

    def load_file(self, file_path: str | Path) -> JSONObject:
        """
        Load a config file into a nested mapping.

        Raises:
            ConfigError: If the file is missing, has an unknown suffix or
                cannot be parsed, or does not hold a mapping.
        """
        path = Path(file_path)

        if not path.exists():
            raise ConfigError(f"File not found: {file_path}")

        loader = self._get_appropriate_loader(path)

        try:
            data = loader.load(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Failed to parse {path}: {e}") from e
        except OSError as e:
            raise ConfigError(f"Failed to read file {path}: {e}") from e

        if not isinstance(data, dict):
            raise ConfigError(f"{path} does not hold a mapping of sections.")

        return data


def load_file(file_path: str | Path) -> JSONObject:
    """
    Convenience function to load a config file with format detection.
    """
    processor = FileProcessor()
    return processor.load_file(file_path)
