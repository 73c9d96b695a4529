import pytest

from src.sim import selftest
from src.sim.selftest import CHECKS, run_selftest
from src.utils.errors import NoSolution


class TestSelftest:
    @pytest.mark.parametrize("name", sorted(CHECKS))
    def test_check_passes(self, name):
        passed, detail = CHECKS[name]()
        assert passed, detail

    def test_errors_become_failures(self, monkeypatch):
        def broken():
            raise NoSolution("lambda too large")

        monkeypatch.setattr(selftest, "CHECKS", {"broken": broken})
        (result,) = run_selftest()
        assert result.name == "broken"
        assert not result.passed
        assert "lambda too large" in result.detail
