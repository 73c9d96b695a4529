import numpy as np
import pytest

from src.core.prior import Prior
from src.core.state_evolution import atom_mse, knockoff_mse
from src.sim.contrast import (
    ContrastConfig,
    ContrastFunction,
    ContrastReport,
    clipped_power,
    contrast_convergence_test,
    contrast_trial,
    default_library,
    limiting_average,
    logistic_step,
    soft_expectation,
    unit_clipped_power,
)
from src.utils.errors import ConfigError


def square(v):
    return np.asarray(v, dtype=float) ** 2


@pytest.fixture
def prior() -> Prior:
    return Prior.two_point(0.1, 4.0)


class TestFactors:
    def test_clipped_power(self):
        values = clipped_power(np.array([-5.0, 1.0, 2.0]), power=2, cap=3.0)
        assert list(values) == [9.0, 1.0, 4.0]

    def test_unit_clipped_power(self):
        even = unit_clipped_power(np.array([-5.0, 1.5, 3.0]), power=2, cap=3.0)
        assert even == pytest.approx([1.0, 0.25, 1.0])
        odd = unit_clipped_power(np.array([-9.0, 0.0, 2.5]), power=1, cap=5.0)
        assert odd == pytest.approx([0.0, 0.5, 0.75])

    def test_library_values_lie_in_the_unit_interval(self):
        grid = np.linspace(-20.0, 20.0, 401)
        for function in default_library():
            values = function(grid, grid, grid)
            assert values.min() >= 0.0
            assert values.max() <= 1.0

    def test_logistic_step(self):
        assert logistic_step(0.5, centre=0.5, sharpness=20.0) == pytest.approx(0.5)
        assert logistic_step(-0.5, centre=0.5, sharpness=20.0, symmetric=True) == pytest.approx(
            0.5
        )
        assert logistic_step(3.0, centre=0.5, sharpness=20.0) == pytest.approx(1.0)

    def test_product_form(self):
        function = ContrastFunction("xyz", estimate=square, truth=square, knockoff=square)
        assert function(np.array([2.0]), np.array([3.0]), np.array([0.5]))[0] == 9.0

    def test_library_names_are_unique(self):
        names = [function.name for function in default_library()]
        assert len(set(names)) == len(names)
        assert "one" in names


class TestLimits:
    def test_constant_one(self, prior: Prior):
        assert limiting_average(ContrastFunction("one"), prior, 1.0, 1.2) == pytest.approx(
            1.0, abs=1e-8
        )

    def test_soft_expectation_matches_risk(self):
        assert soft_expectation(square, 0.0, 1.2, 0.8) == pytest.approx(
            knockoff_mse(1.2, 0.8), abs=1e-9
        )

        def error(v):
            return (np.asarray(v, dtype=float) - 3.0) ** 2

        assert soft_expectation(error, 3.0, 1.2, 0.8) == pytest.approx(
            atom_mse(3.0, 1.2, 0.8), abs=1e-9
        )

    def test_knockoff_factor(self, prior: Prior):
        function = ContrastFunction("z^2", knockoff=square)
        assert limiting_average(function, prior, 1.2, 0.8) == pytest.approx(
            knockoff_mse(1.2, 0.8), abs=1e-9
        )

    def test_estimate_factor_averages_over_atoms(self, prior: Prior):
        function = ContrastFunction("x^2", estimate=square)
        expected = 0.9 * soft_expectation(square, 0.0, 1.0, 1.0) + 0.1 * soft_expectation(
            square, 4.0, 1.0, 1.0
        )
        assert limiting_average(function, prior, 1.0, 1.0) == pytest.approx(expected)


class TestConvergenceTest:
    def test_report(self):
        report = ContrastReport(
            np.array([2.0, 1.0]), ("a",), np.array([[0.5, 0.2]]), np.array([[0.4, 0.5]])
        )
        assert report.deviations == pytest.approx(np.array([[0.1, 0.3]]))
        assert report.max_deviation == pytest.approx(0.3)

    def test_config(self, prior: Prior):
        config = ContrastConfig(100, 50, 1.0, prior, lambdas=(1.0, 2.0))
        assert config.lambdas == (2.0, 1.0)
        assert config.delta == 2.0
        assert len(ContrastConfig(100, 50, 1.0, prior).lambdas) == 5
        with pytest.raises(ConfigError):
            ContrastConfig(100, 50, 1.0, prior, lambdas=(1.0, 0.0))
        with pytest.raises(ConfigError):
            ContrastConfig(100, 50, 1.0, prior, trials=0)

    def test_constant_function_agrees(self, prior: Prior):
        config = ContrastConfig(100, 100, 1.0, prior, trials=2, base_seed=3, lambdas=(1.0, 2.0))
        summary = contrast_convergence_test(config, [ContrastFunction("one")], n_jobs=1)
        assert len(summary.reports) == 2
        report = summary.reports[0]
        assert list(report.lambdas) == [2.0, 1.0]
        assert report.names == ("one",)
        assert report.empirical == pytest.approx(np.ones((1, 2)))
        assert summary.median_deviation < 1e-8

    def test_trials_are_reproducible_and_distinct(self, prior: Prior):
        config = ContrastConfig(60, 40, 1.0, prior, base_seed=5, lambdas=(1.0,))
        library = [ContrastFunction("x^2", estimate=square)]
        first = contrast_trial(config, 0, library)
        assert np.array_equal(first.empirical, contrast_trial(config, 0, library).empirical)
        assert not np.array_equal(first.empirical, contrast_trial(config, 1, library).empirical)

    @pytest.mark.slow
    def test_library_converges_and_tightens_with_p(self, prior: Prior):
        small, large = (
            contrast_convergence_test(ContrastConfig(p, p, 1.0, prior, trials=20), n_jobs=-1)
            for p in (2000, 4000)
        )
        assert small.reports[0].empirical.shape == (len(default_library()), 5)
        assert small.median_deviation <= 0.02
        assert large.median_deviation < small.median_deviation
