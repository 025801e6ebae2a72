"""
Collects failures of individual runs in a sweep to provide a consistent view to
the user.
"""

import json
from pathlib import Path
from typing import cast

from hepasim._logging import Log
from hepasim.exceptions import HepasimError

type JSONPrimitive = str | int | float | bool | None
type JSONArray = list["JSONValue"]
type JSONObject = dict[str, "JSONValue"]
type JSONValue = JSONPrimitive | JSONArray | JSONObject


class ErrorHandler:
    def __init__(self) -> None:
        self._errors: list[JSONObject] = []

    def register_logs(self, logs: list[Log]):
        self._errors.extend(cast(list[JSONObject], logs))

    def register_log(self, log: Log):
        self._errors.append(cast(JSONObject, log))

    def register_exception(self, run: str, error: BaseException):
        """
        Record an exception raised by a single run.

        Args:
            run: The run identifier, used as the location of the error.
            error: The exception raised by the run.
        """
        log: Log = {
            "type": type(error).__name__,
            "loc": (run,),
            "msg": str(error),
        }

        if isinstance(error, HepasimError) and error.statement:
            log["input"] = error.statement

        self.register_log(log)

    def deduplicate(self):
        """
        Remove duplicates by converting each dict to a JSON string for comparison.
        """
        seen: set[str] = set()
        unique_data: list[JSONObject] = []

        item: JSONObject
        for item in self._errors:
            item_json = json.dumps(item, sort_keys=True, separators=(",", ":"))
            if item_json not in seen:
                seen.add(item_json)
                unique_data.append(item)

        self._errors = unique_data

    def write(self, path: Path) -> None:
        with path.open("w", encoding="utf-8") as f:
            f.write(json.dumps(self._errors, indent=2))

    @property
    def errors(self) -> list[JSONObject]:
        return self._errors
