"""
Tests hepasim/_logging.py
"""

from hepasim._logging import Logger


def record_violation(name: str) -> None:
    Logger.log({"type": "bound_violation", "loc": (name, 0.5), "msg": name})


def test_writer():
    with Logger.context():
        record_violation("mass_bound")
        assert Logger.logs == [
            {"type": "bound_violation", "loc": ("mass_bound", 0.5), "msg": "mass_bound"}
        ]

        record_violation("mass_bound")
        assert len(Logger.logs) == 2

    assert Logger.logs == []


def test_context_clears_after_an_exception():
    try:
        with Logger.context() as logs:
            record_violation("sigma_containment")
            assert logs
            raise RuntimeError("stop")
    except RuntimeError:
        pass

    assert Logger.logs == []
