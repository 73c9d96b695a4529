import pytest
from typer.testing import CliRunner

from src.cli import app
from src.sim.selftest import CheckResult

CONFIG = """
n = 40
p = 50
sigma = 1
lambda = {lam}
statistic = {statistic}
q = 0.1 0.2
trials = 2
seed = 3
atom = 0 0.9
atom = 4 0.1
"""

runner = CliRunner()


@pytest.fixture
def write_config(tmp_path):
    def write(lam="1.0", statistic="lcd"):
        path = tmp_path / "run.cfg"
        path.write_text(CONFIG.format(lam=lam, statistic=statistic))
        return path

    return write


class TestCommands:
    def test_predict(self, write_config, tmp_path):
        result = runner.invoke(app, ["predict", str(write_config()), "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "theory_curve.csv").exists()
        assert "limiting tpp" in result.output

    def test_predict_without_solution(self, write_config, tmp_path):
        result = runner.invoke(app, ["predict", str(write_config(lam="1e6")), "-o", str(tmp_path)])
        assert result.exit_code == 2

    def test_bad_config(self, write_config, tmp_path):
        path = write_config(statistic="ridge")
        result = runner.invoke(app, ["predict", str(path), "-o", str(tmp_path)])
        assert result.exit_code == 1

    def test_simulate(self, write_config, tmp_path):
        path = write_config(statistic="lasso_coef")
        result = runner.invoke(app, ["simulate", str(path), "-o", str(tmp_path), "-j", "1"])
        assert result.exit_code == 0, result.output
        for name in ("trial_paths.csv", "selections.csv", "summary.csv"):
            assert (tmp_path / name).exists()

    def test_cv_needs_lcd(self, write_config):
        result = runner.invoke(app, ["cv", str(write_config(statistic="lasso_coef"))])
        assert result.exit_code == 1

    def test_unknown_figure(self, tmp_path):
        result = runner.invoke(app, ["reproduce", "fig9", "-o", str(tmp_path)])
        assert result.exit_code == 1


class TestSelftest:
    def test_success(self, monkeypatch):
        monkeypatch.setattr("src.cli.run_selftest", lambda: [CheckResult("seeds", True, "ok")])
        result = runner.invoke(app, ["selftest"])
        assert result.exit_code == 0
        assert "Success" in result.output

    def test_failure(self, monkeypatch):
        checks = [CheckResult("seeds", True, "ok"), CheckResult("kkt", False, "1e-3")]
        monkeypatch.setattr("src.cli.run_selftest", lambda: checks)
        result = runner.invoke(app, ["selftest"])
        assert result.exit_code == 1
        assert "1 check(s) failed" in result.output
