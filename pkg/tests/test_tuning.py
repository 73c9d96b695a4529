import math

import numpy as np
import pytest

from src.core.prior import Prior, Regime, effective_problem
from src.core.state_evolution import alpha_scan, solve_state_evolution
from src.core.tuning import CvSolution, cv_amp, lambda_grid, oracle_lambda_star, tau_profile


@pytest.fixture
def prior() -> Prior:
    return Prior.two_point(0.1, 4.0)


class TestLambdaGrid:
    def test_default_grid(self):
        grid = lambda_grid()
        assert grid.size == 50
        assert grid[0] == pytest.approx(0.01)
        assert grid[-1] == pytest.approx(4.0)
        assert np.all(np.diff(grid) > 0)

    def test_tau_profile_marks_unreachable_lambdas(self, prior: Prior):
        taus = tau_profile(prior, 1.0, 1.0, [1.0, 1e6])
        assert math.isfinite(taus[0])
        assert taus[1] == math.inf


class TestOracleLambda:
    def test_minimises_tau(self, prior: Prior):
        lam_star = oracle_lambda_star(prior, 1.0, 1.0)
        tau_star = solve_state_evolution(prior, 1.0, 1.0, lam_star).tau
        for factor in (0.8, 1.25):
            neighbour = solve_state_evolution(prior, 1.0, 1.0, lam_star * factor).tau
            assert tau_star <= neighbour + 1e-9

    def test_inside_search_window(self, prior: Prior):
        lam_star = oracle_lambda_star(prior, 1.0, 1.0, Regime.model_x())
        assert 0.01 < lam_star < 4.0


class TestCvAmp:
    @pytest.fixture
    def solution(self, prior: Prior) -> CvSolution:
        return cv_amp(prior, 1.0, 1.0, 10)

    def test_certified(self, solution: CvSolution):
        assert solution.residual <= 1e-6
        assert solution.folds == 10
        assert solution.lambda_cv > 0

    def test_tau_is_the_minimum_along_the_scan(self, prior: Prior, solution: CvSolution):
        eff_prior, eff_delta = effective_problem(prior, 1.0, Regime.cv(10))
        _, taus = alpha_scan(eff_prior, eff_delta, 1.0).converged()
        assert solution.tau_cv <= taus.min() + 1e-9

    def test_matches_grid_argmin_on_training_ratio(self, prior: Prior, solution: CvSolution):
        grid = lambda_grid()
        taus = tau_profile(prior, 0.9, 1.0, grid, Regime.model_x())
        k = int(np.argmin(taus))
        assert grid[max(k - 1, 0)] <= solution.lambda_cv <= grid[min(k + 1, grid.size - 1)]

    @pytest.mark.parametrize(
        "epsilon,magnitude,delta",
        [
            (0.1, 10.0, 0.5),
            (0.1, 4.0, 0.5),
            (0.1, 4.0, 1.0),
            (0.1, 4.0, 1.5),
            (0.1, 4.0, 2.0),
            (0.05, 5.0, 1.0),
            (0.1, 5.0, 1.0),
            (0.2, 5.0, 1.0),
            (0.1, 5.0, 1000 / 1500),
        ],
    )
    def test_reference_settings_solve(self, epsilon, magnitude, delta):
        solution = cv_amp(Prior.two_point(epsilon, magnitude), delta, 1.0, 10)
        assert solution.residual <= 1e-6
        assert 0.01 < solution.lambda_cv < 4.0


class TestOracleLambdaAgainstGrid:
    def test_rises_with_noise(self, prior: Prior):
        ladder = [oracle_lambda_star(prior, 1.0, sigma) for sigma in (0.5, 1.0, 2.0)]
        assert ladder[0] < ladder[1] < ladder[2]

    @pytest.mark.slow
    def test_matches_fine_grid_argmin(self, prior: Prior):
        grid = lambda_grid(points=500)
        k = int(np.argmin(tau_profile(prior, 1.0, 1.0, grid)))
        lam_star = oracle_lambda_star(prior, 1.0, 1.0)
        assert grid[max(k - 1, 0)] <= lam_star <= grid[min(k + 1, grid.size - 1)]
