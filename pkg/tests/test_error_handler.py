"""
Tests hepasim/_error_handler.py
"""

import json
from pathlib import Path

from hepasim._error_handler import ErrorHandler
from hepasim.exceptions import NoConvergence, StabilityViolation


def test_exceptions_become_logs():
    handler = ErrorHandler()

    handler.register_exception("run-000", StabilityViolation(0.1, 0.01))
    handler.register_exception("run-001", NoConvergence(10, 1e-3))
    handler.register_exception("run-002", RuntimeError("boom"))

    first, second, third = handler.errors

    assert first["type"] == "StabilityViolation"
    assert first["loc"] == ("run-000",)
    assert first["input"] == "explicit reaction stability"
    assert second["type"] == "NoConvergence"
    assert "input" not in second
    assert third == {"type": "RuntimeError", "loc": ("run-002",), "msg": "boom"}


def test_deduplicate_and_write(tmp_path: Path):
    handler = ErrorHandler()
    log = {"type": "ConfigError", "loc": ("run-001",), "msg": "bad"}

    handler.register_logs([log, log])  # pyright: ignore[reportArgumentType]
    handler.register_log({"type": "ConfigError", "msg": "other"})
    handler.deduplicate()

    assert len(handler.errors) == 2

    path = tmp_path / "errors.json"
    handler.write(path)

    assert json.loads(path.read_text(encoding="utf-8")) == [
        {"type": "ConfigError", "loc": ["run-001"], "msg": "bad"},
        {"type": "ConfigError", "msg": "other"},
    ]
