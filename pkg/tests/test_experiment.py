import math
from dataclasses import replace
from functools import partial

import numpy as np
import pytest
from scipy.stats import binomtest

from src.core.knockoffs import EmpiricalPath, rates_on_grid
from src.core.lasso import SignalVector, generate_design, lasso_solve
from src.core.prior import Prior
from src.core.theory import CurvePoint, TradeoffCurve, lcd_curve
from src.core.tuning import cv_amp, lambda_grid
from src.sim.experiment import (
    ExperimentConfig,
    LambdaSpec,
    LevelOutcome,
    TrialRecord,
    fold_path,
    kfold_cv_lambda,
    parse_statistic,
    run_experiment,
    run_trial,
    summarise,
    sup_distance,
    threads_from_env,
)
from src.sim.figures import FIG5_EPSILONS
from src.utils.constants import LambdaRule, Statistic
from src.utils.errors import ConfigError, NonConvergence

CONFIG_TEXT = """
# small Model-X run
n = 60
p = 80
sigma = 1
lambda = 1.0
statistic = lcd
q = 0.1 0.2
trials = 3
seed = 7
atom = 0 0.8
atom = 4 0.2
"""


def make_config(**changes) -> ExperimentConfig:
    lines = []
    for line in CONFIG_TEXT.strip().splitlines():
        key = line.split("=", 1)[0].strip()
        if key in changes:
            value = changes.pop(key)
            if value is not None:
                lines.append(f"{key} = {value}")
        else:
            lines.append(line)
    lines.extend(f"{key} = {value}" for key, value in changes.items())
    return ExperimentConfig.from_text("\n".join(lines))


def hand_record(trial_id: int, fdp: float, tpp: float, selected: int) -> TrialRecord:
    outcome = LevelOutcome(q=0.1, threshold=1.0, selected=selected, fdp=fdp, tpp=tpp)
    empty = EmpiricalPath(np.array([]), np.array([]), np.array([]))
    truth = SignalVector(np.zeros(1))
    return TrialRecord(trial_id, 1.0, empty, (outcome,), None, np.zeros(1), truth)


@pytest.fixture
def config() -> ExperimentConfig:
    return make_config()


class TestConfig:
    def test_lambda_spec(self):
        assert LambdaSpec.parse("oracle").rule == LambdaRule.ORACLE
        assert LambdaSpec.parse("cv 5") == LambdaSpec.cv(5)
        assert LambdaSpec.parse("1.5").value == 1.5

    @pytest.mark.parametrize("text", ["cv 1", "cv", "abc", "-1", "1 2 3"])
    def test_bad_lambda_spec(self, text):
        with pytest.raises(ConfigError):
            LambdaSpec.parse(text)

    def test_statistic(self):
        assert parse_statistic("counting_coef 0.3") == (Statistic.COUNTING_COEF, 0.3)
        assert parse_statistic("lcd") == (Statistic.LCD, None)

    @pytest.mark.parametrize("text", ["lcd 3", "counting_coef", "counting_coef x", "foo", ""])
    def test_bad_statistic(self, text):
        with pytest.raises(ConfigError):
            parse_statistic(text)

    def test_from_text(self, config: ExperimentConfig):
        assert (config.n, config.p, config.trials, config.base_seed) == (60, 80, 3, 7)
        assert config.delta == 0.75
        assert config.q_levels == (0.1, 0.2)
        assert config.prior.epsilon == pytest.approx(0.2)
        assert config.regime.kind == "model_x"

    def test_solver_overrides(self):
        assert make_config(t_points=50).settings.t_points == 50
        with pytest.raises(ConfigError):
            make_config(tau_damping=2)

    @pytest.mark.parametrize(
        "changes",
        [
            {"sigma": None},
            {"colour": "blue"},
            {"q": "0.2 0.1"},
            {"q": "1.5"},
            {"sigma": -1},
            {"statistic": "counting_coef 0"},
        ],
    )
    def test_rejected(self, changes):
        with pytest.raises(ConfigError):
            make_config(**changes)

    def test_atoms_required(self):
        text = "\n".join(line for line in CONFIG_TEXT.splitlines() if "atom" not in line)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_text(text)

    def test_masses_checked(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_text(CONFIG_TEXT + "atom = 8 0.1\n")

    def test_from_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(CONFIG_TEXT)
        assert ExperimentConfig.from_file(path) == make_config()

    def test_threads_from_env(self, monkeypatch):
        monkeypatch.delenv("LASSOKO_THREADS", raising=False)
        assert threads_from_env() == 1
        monkeypatch.setenv("LASSOKO_THREADS", "4")
        assert threads_from_env() == 4
        monkeypatch.setenv("LASSOKO_THREADS", "0")
        assert threads_from_env() == 1
        monkeypatch.setenv("LASSOKO_THREADS", "many")
        with pytest.raises(ConfigError):
            threads_from_env()


class TestCrossValidation:
    def test_noiseless_data_picks_a_small_penalty(self):
        X = generate_design(100, 50, seed=1)
        beta = np.zeros(50)
        beta[:5] = 3.0
        grid = lambda_grid()
        best = kfold_cv_lambda(X, X.entries @ beta, grid, folds=5, seed=2)
        assert best <= grid[4]

    def test_leave_one_out_matches_direct_refits(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((20, 5)) / math.sqrt(20)
        Y = X @ np.array([3.0, 0.0, -2.0, 0.0, 0.0]) + 0.5 * rng.standard_normal(20)
        lambdas = np.array([2.0, 1.0, 0.5, 0.2])

        errors = np.zeros(lambdas.size)
        for i in range(20):
            keep = np.arange(20) != i
            for k, lam in enumerate(lambdas):
                fit = lasso_solve(X[keep], Y[keep], lam)
                errors[k] += (Y[i] - X[i] @ fit.coefficients) ** 2

        expected = lambdas[int(np.argmin(errors))]
        assert kfold_cv_lambda(X, Y, lambdas, folds=20, seed=0) == expected

    def test_folds_checked(self):
        with pytest.raises(ValueError):
            kfold_cv_lambda(np.ones((4, 2)), np.ones(4), [1.0], folds=1, seed=0)

    def test_unconverged_fold_path_raises(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((40, 30)) / math.sqrt(40)
        Y = X @ rng.normal(0.0, 2.0, 30) + rng.standard_normal(40)
        with pytest.raises(NonConvergence):
            fold_path(X, Y, np.array([0.5, 0.05]), max_iter=1)

    def test_cv_trial_surfaces_fold_failures(self, monkeypatch):
        monkeypatch.setattr("src.sim.experiment.fold_path", partial(fold_path, max_iter=1))
        with pytest.raises(NonConvergence, match="trial 0"):
            run_trial(make_config(n=60, p=40, **{"lambda": "cv 3"}), 0)


class TestTrials:
    def test_deterministic(self, config: ExperimentConfig):
        first, second = run_trial(config, 1), run_trial(config, 1)
        assert np.array_equal(first.statistic, second.statistic)
        assert first.outcomes == second.outcomes
        assert first.statistic.size == config.p
        assert [outcome.q for outcome in first.outcomes] == [0.1, 0.2]

    def test_trials_differ(self, config: ExperimentConfig):
        assert not np.array_equal(run_trial(config, 0).statistic, run_trial(config, 1).statistic)

    def test_noiseless_strong_signal_is_fully_recovered(self):
        config = make_config(
            n=200, p=100, sigma=0, statistic="lasso_coef", **{"lambda": 0.5}, q="0.1"
        )
        config = replace(config, prior=Prior.two_point(0.1, 100.0))
        outcome = run_trial(config, 0).outcomes[0]
        assert outcome.tpp == 1.0
        assert outcome.fdp <= 0.1

    def test_cv_rule_records_its_penalty(self):
        record = run_trial(make_config(n=60, p=40, **{"lambda": "cv 3"}), 0)
        assert record.cv_lambda == record.lambda_used
        assert record.cv_lambda in lambda_grid()

    def test_counting_statistic(self):
        record = run_trial(make_config(statistic="counting_coef 0.5"), 0)
        assert record.statistic.size == 80
        assert (record.statistic >= 0).all()

    def test_lasso_max_has_no_penalty(self):
        record = run_trial(make_config(statistic="lasso_max"), 0)
        assert math.isnan(record.lambda_used)

    def test_non_convergence_names_the_trial(self, config, monkeypatch):
        def stalled(*args, **kwargs):
            raise NonConvergence("sweep cap")

        monkeypatch.setattr("src.sim.experiment.lasso_solve", stalled)
        with pytest.raises(NonConvergence, match="trial 3"):
            run_trial(config, 3)

    def test_run_experiment_is_ordered(self, config: ExperimentConfig):
        records = run_experiment(config, n_jobs=1)
        assert [record.trial_id for record in records] == [0, 1, 2]
        assert np.array_equal(records[2].statistic, run_trial(config, 2).statistic)


class TestAggregation:
    def test_summarise(self):
        summary = summarise([hand_record(0, 0.0, 0.5, 4), hand_record(1, 0.2, 0.7, 6)])
        row = summary.iloc[0]
        assert row["q"] == 0.1
        assert row["trials"] == 2
        assert row["mean_fdp"] == pytest.approx(0.1)
        assert row["se_fdp"] == pytest.approx(0.1)
        assert row["mean_tpp"] == pytest.approx(0.6)
        assert row["mean_selected"] == pytest.approx(5.0)

    def test_single_trial_has_zero_error_bar(self):
        assert summarise([hand_record(0, 0.2, 0.5, 3)]).iloc[0]["se_fdp"] == 0.0

    def test_sup_distance(self):
        statistic = np.linspace(0.1, 3.0, 30)
        truth = SignalVector(np.where(np.arange(30) % 3 == 0, 1.0, 0.0))
        ts = np.array([0.5, 1.0, 2.0])
        fdp, tpp, _ = rates_on_grid(statistic, truth, ts)
        curve = TradeoffCurve(
            Statistic.LASSO_COEF,
            1.0,
            tuple(CurvePoint(t, f, p) for t, f, p in zip(ts, fdp, tpp)),
        )
        record = TrialRecord(0, 1.0, None, (), None, statistic, truth)

        assert sup_distance(record, curve, min_selected=1) == pytest.approx(0.0)
        assert math.isnan(sup_distance(record, curve, min_selected=100))

    def test_sup_distance_matches_points_along_the_curve(self):
        statistic = np.linspace(0.1, 3.0, 30)
        truth = SignalVector(np.where(np.arange(30) % 3 == 0, 1.0, 0.0))
        ts = np.array([0.5, 1.0, 2.0])
        fdp, tpp, _ = rates_on_grid(statistic, truth, ts)
        # same points attached to other thresholds: the curves coincide in the plane
        swapped = TradeoffCurve(
            Statistic.LASSO_COEF,
            1.0,
            tuple(CurvePoint(t, f, p) for t, f, p in zip(ts, fdp[::-1], tpp[::-1])),
        )
        shifted = TradeoffCurve(
            Statistic.LASSO_COEF,
            1.0,
            tuple(CurvePoint(t, f + 0.05, p) for t, f, p in zip(ts, fdp, tpp)),
        )
        record = TrialRecord(0, 1.0, None, (), None, statistic, truth)

        assert sup_distance(record, swapped, min_selected=1) == pytest.approx(0.0, abs=1e-12)
        assert 0.0 < sup_distance(record, shifted, min_selected=1) <= 0.05 + 1e-12


@pytest.mark.slow
class TestAcceptance:
    @pytest.fixture(scope="class")
    def fdr_records(self) -> list[TrialRecord]:
        prior = Prior.two_point(0.1, 4.0)
        config = ExperimentConfig(
            n=500,
            p=500,
            sigma=1.0,
            prior=prior,
            lambda_spec=LambdaSpec.fixed(cv_amp(prior, 1.0, 1.0, 10).lambda_cv),
            statistic=Statistic.LCD,
            q_levels=(0.1,),
            trials=200,
            base_seed=11,
        )
        return run_experiment(config, n_jobs=-1)

    def test_knockoffs_control_fdr(self, fdr_records):
        row = summarise(fdr_records).iloc[0]
        assert row["mean_fdp"] <= 0.1 + 2 * row["se_fdp"]

    def test_null_signs_are_coin_flips(self, fdr_records):
        signs = np.concatenate([np.sign(r.statistic[~r.truth.is_nonnull()]) for r in fdr_records])
        signs = signs[signs != 0]
        assert binomtest(int((signs > 0).sum()), signs.size).pvalue > 0.01

    def test_trials_track_the_limiting_curve(self):
        prior = Prior.two_point(0.1, 4.0)
        lam_cv = cv_amp(prior, 1.0, 1.0, 10).lambda_cv
        config = ExperimentConfig(
            n=1000,
            p=1000,
            sigma=1.0,
            prior=prior,
            lambda_spec=LambdaSpec.fixed(lam_cv),
            statistic=Statistic.LCD,
            q_levels=(0.1,),
            trials=15,
        )
        curve = lcd_curve(prior, 1.0, 1.0, lam_cv)
        distances = [sup_distance(record, curve) for record in run_experiment(config, -1)]
        assert np.nanmedian(distances) <= 0.08

    @pytest.mark.parametrize("epsilon", FIG5_EPSILONS)
    def test_cross_validation_approaches_its_limit(self, epsilon):
        prior = Prior.two_point(epsilon, 5.0)
        config = ExperimentConfig(
            n=1000,
            p=1000,
            sigma=1.0,
            prior=prior,
            lambda_spec=LambdaSpec.cv(10),
            statistic=Statistic.LCD,
            q_levels=(0.1,),
            trials=10,
        )
        estimates = [record.cv_lambda for record in run_experiment(config, -1)]
        limit = cv_amp(prior, 1.0, 1.0, 10).lambda_cv
        assert abs(np.mean(estimates) - limit) <= 0.15 * limit

    def test_huge_signals_are_found(self):
        prior = Prior.two_point(0.1, 100.0)
        config = ExperimentConfig(
            n=1000,
            p=2000,
            sigma=1.0,
            prior=prior,
            lambda_spec=LambdaSpec.fixed(cv_amp(prior, 0.5, 1.0, 10).lambda_cv),
            statistic=Statistic.LCD,
            q_levels=(0.1,),
        )
        assert run_trial(config, 0).outcomes[0].tpp >= 0.95
