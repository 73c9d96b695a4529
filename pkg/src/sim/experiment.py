"""Monte Carlo trials of the selection pipelines and their aggregation."""

import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lasso_path as sklearn_lasso_path
from sklearn.model_selection import KFold

from ..core.knockoffs import (
    AugmentedDesign,
    EmpiricalPath,
    Selection,
    augment,
    counting_threshold,
    empirical_rates,
    empirical_tradeoff,
    knockoff_threshold,
    lcd_stats,
    oracle_selection,
    rates_on_grid,
)
from ..core.lasso import (
    DesignMatrix,
    SignalVector,
    as_array,
    generate_design,
    geometric_lambda_grid,
    lasso_max_stat,
    lasso_path,
    lasso_solve,
    sample_signal,
    simulate_response,
)
from ..core.prior import Prior, Regime
from ..core.theory import TradeoffCurve
from ..core.tuning import lambda_grid, oracle_lambda_star
from ..utils.config import (
    DEFAULT_SETTINGS,
    SOLVER_KEYS,
    SolverSettings,
    parse_key_values,
    read_key_values,
)
from ..utils.constants import (
    CV_FOLDS,
    MIN_SELECTED,
    THREADS_ENV,
    LambdaRule,
    Statistic,
    Stream,
)
from ..utils.errors import ConfigError, NonConvergence
from ..utils.rng import derive_seed

logger = logging.getLogger(__name__)

CV_MAX_ITER = 100_000
CV_TOL = 1e-7
CURVE_REFINE = 10
REQUIRED_KEYS = ("n", "p", "sigma", "lambda", "statistic", "q")
OPTIONAL_KEYS = ("trials", "seed") + SOLVER_KEYS


@dataclass(frozen=True)
class LambdaSpec:
    """How a trial picks its Lasso penalty: a fixed value, K-fold CV, or the theory lambda*."""

    rule: LambdaRule
    value: float | None = None
    folds: int | None = None

    @classmethod
    def fixed(cls, value: float) -> "LambdaSpec":
        if value <= 0:
            raise ConfigError(f"lambda must be positive, got {value}")
        return cls(LambdaRule.FIXED, value=value)

    @classmethod
    def cv(cls, folds: int) -> "LambdaSpec":
        if folds < 2:
            raise ConfigError(f"cross-validation needs at least 2 folds, got {folds}")
        return cls(LambdaRule.CV, folds=folds)

    @classmethod
    def oracle(cls) -> "LambdaSpec":
        return cls(LambdaRule.ORACLE)

    @classmethod
    def parse(cls, text: str) -> "LambdaSpec":
        """'<float>', 'cv <K>' or 'oracle'."""
        fields = text.split()
        try:
            match fields:
                case ["oracle"]:
                    return cls.oracle()
                case ["cv", folds]:
                    return cls.cv(int(folds))
                case [value]:
                    return cls.fixed(float(value))
        except ValueError as exc:
            raise ConfigError(f"lambda = {text!r}") from exc
        raise ConfigError(f"lambda = {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One simulation setting.

    Attributes:
        n (int): Rows of the design
        p (int): Original columns
        sigma (float): Noise level
        prior (Prior): Coefficient prior
        lambda_spec (LambdaSpec): Penalty rule
        statistic (Statistic): Selection statistic
        q_levels (tuple): Target levels, strictly increasing in (0, 1)
        trials (int): Number of independent trials
        base_seed (int): Root of every random stream
        counting_ratio (float | None): c = r / p, required for COUNTING_COEF
        settings (SolverSettings): State-evolution knobs for theory lambdas
    """

    n: int
    p: int
    sigma: float
    prior: Prior
    lambda_spec: LambdaSpec
    statistic: Statistic
    q_levels: tuple[float, ...]
    trials: int = 1
    base_seed: int = 0
    counting_ratio: float | None = None
    settings: SolverSettings = field(default=DEFAULT_SETTINGS, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "q_levels", tuple(float(q) for q in self.q_levels))
        if self.n < 1 or self.p < 1 or self.trials < 1:
            raise ConfigError("n, p and trials must be at least 1")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        if not self.q_levels or any(not 0 < q < 1 for q in self.q_levels):
            raise ConfigError(f"q levels must lie in (0, 1), got {self.q_levels}")
        if any(b <= a for a, b in zip(self.q_levels, self.q_levels[1:])):
            raise ConfigError("q levels must be strictly increasing")
        if self.statistic == Statistic.COUNTING_COEF and not (self.counting_ratio or 0) > 0:
            raise ConfigError("counting_coef needs a positive counting ratio")

    @property
    def delta(self) -> float:
        return self.n / self.p

    @property
    def regime(self) -> Regime:
        match self.statistic:
            case Statistic.LCD:
                return Regime.model_x()
            case Statistic.COUNTING_COEF:
                return Regime.counting(self.counting_ratio)
            case _:
                return Regime.original()

    @classmethod
    def from_entries(
        cls, entries: dict[str, str], atoms: list[tuple[float, float]]
    ) -> "ExperimentConfig":
        unknown = set(entries) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        missing = [key for key in REQUIRED_KEYS if key not in entries]
        if missing:
            raise ConfigError(f"missing keys {missing}")
        if not atoms:
            raise ConfigError("the prior needs 'atom = value mass' lines")

        statistic, ratio = parse_statistic(entries["statistic"])
        try:
            prior = Prior(tuple(atoms))
            return cls(
                n=int(entries["n"]),
                p=int(entries["p"]),
                sigma=float(entries["sigma"]),
                prior=prior,
                lambda_spec=LambdaSpec.parse(entries["lambda"]),
                statistic=statistic,
                q_levels=tuple(float(q) for q in entries["q"].split()),
                trials=int(entries.get("trials", 1)),
                base_seed=int(entries.get("seed", 0)),
                counting_ratio=ratio,
                settings=DEFAULT_SETTINGS.with_overrides(
                    {key: entries[key] for key in SOLVER_KEYS if key in entries}
                ),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_entries(*parse_key_values(text))

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_entries(*read_key_values(path))


def parse_statistic(text: str) -> tuple[Statistic, float | None]:
    """'lasso_max', 'lasso_coef', 'lcd' or 'counting_coef <c>'."""
    fields = text.split()
    try:
        statistic = Statistic(fields[0])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"statistic = {text!r}") from exc

    if statistic == Statistic.COUNTING_COEF:
        if len(fields) != 2:
            raise ConfigError("counting_coef needs a ratio, e.g. 'counting_coef 0.3'")
        try:
            return statistic, float(fields[1])
        except ValueError as exc:
            raise ConfigError(f"statistic = {text!r}") from exc
    if len(fields) != 1:
        raise ConfigError(f"statistic = {text!r}")
    return statistic, None


@dataclass(frozen=True)
class LevelOutcome:
    q: float
    threshold: float
    selected: int
    fdp: float
    tpp: float


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """
    Result of one trial.

    Attributes:
        trial_id (int): Trial index
        lambda_used (float): Penalty of the fit; NaN for the Lasso-max statistic
        path (EmpiricalPath): Realised FDP / TPP at every observed threshold
        outcomes (tuple): One LevelOutcome per q
        cv_lambda (float | None): Cross-validated penalty, when the rule is CV
        statistic (np.ndarray): Per-variable statistic the path thresholds
        truth (SignalVector): True coefficients
    """

    trial_id: int
    lambda_used: float
    path: EmpiricalPath
    outcomes: tuple[LevelOutcome, ...]
    cv_lambda: float | None
    statistic: np.ndarray
    truth: SignalVector


def threads_from_env() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV}={raw!r}") from exc
    return threads if threads != 0 else 1


def kfold_cv_lambda(X, Y, lambdas, folds: int, seed: int) -> float:
    """
    K-fold cross-validated penalty.

    Rows are permuted with the seed and cut into contiguous folds. For every fold the Lasso
    path over ``lambdas`` is fit on the remaining rows, and the held-out mean squared
    prediction error is averaged over folds.

    Returns:
        float: The grid penalty with the smallest mean held-out error

    Raises:
        NonConvergence: A fold path did not converge
    """
    if folds < 2:
        raise ValueError(f"cross-validation needs at least 2 folds, got {folds}")
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")

    entries = as_array(X)
    Y = np.asarray(Y, dtype=float)
    splitter = KFold(n_splits=folds, shuffle=True, random_state=seed % 2**32)
    errors = np.zeros((folds, lambdas.size))

    for k, (train, test) in enumerate(splitter.split(entries)):
        coefficients = fold_path(entries[train], Y[train], lambdas)
        residuals = Y[test][:, None] - entries[test] @ coefficients
        errors[k] = np.mean(residuals**2, axis=0)

    mean_error = errors.mean(axis=0)
    best = float(lambdas[int(np.argmin(mean_error))])
    logger.debug("cv over %d lambdas, %d folds: %.6g", lambdas.size, folds, best)
    return best


def fold_path(
    X: np.ndarray, Y: np.ndarray, lambdas: np.ndarray, max_iter: int = CV_MAX_ITER
) -> np.ndarray:
    """
    Coefficients (m x len(lambdas)) of the training-fold path for a decreasing grid.

    scikit-learn scales the squared loss by 1 / n, so its penalty is lambda / n.

    Raises:
        NonConvergence: scikit-learn reports a penalty on the path as not converged
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        try:
            _, coefficients, _ = sklearn_lasso_path(
                X, Y, alphas=lambdas / X.shape[0], tol=CV_TOL, max_iter=max_iter
            )
        except ConvergenceWarning as exc:
            raise NonConvergence(f"cross-validation fold path: {exc}") from exc
    return coefficients


@lru_cache(maxsize=64)
def theory_lambda(config: ExperimentConfig) -> float:
    """lambda* of the statistic's regime; used by the ORACLE rule."""
    return oracle_lambda_star(
        config.prior, config.delta, config.sigma, config.regime, config.settings
    )


@dataclass(frozen=True, eq=False)
class TrialData:
    """
    One trial's draw.

    Attributes:
        design (DesignMatrix): Matrix the Lasso is fit on, augmented for knockoff statistics
        response (np.ndarray): Y = X beta + noise
        truth (SignalVector): True coefficients
        augmented (AugmentedDesign | None): Augmentation, for knockoff statistics only
    """

    design: DesignMatrix
    response: np.ndarray
    truth: SignalVector
    augmented: AugmentedDesign | None = None


def draw_trial(config: ExperimentConfig, trial_id: int) -> TrialData:
    seed = config.base_seed
    X = generate_design(config.n, config.p, derive_seed(seed, trial_id, Stream.DESIGN))
    truth = sample_signal(config.prior, config.p, derive_seed(seed, trial_id, Stream.SIGNAL))
    Y = simulate_response(X, truth, config.sigma, derive_seed(seed, trial_id, Stream.NOISE))

    if config.statistic not in Statistic.augmented():
        return TrialData(X, Y, truth)
    augmented = augment(X, config.regime, derive_seed(seed, trial_id, Stream.KNOCKOFF))
    return TrialData(augmented.combined, Y, truth, augmented)


def trial_cv_lambda(
    config: ExperimentConfig, trial_id: int, data: TrialData | None = None
) -> float:
    """Cross-validated penalty of one trial over the default lambda grid."""
    data = data or draw_trial(config, trial_id)
    folds = config.lambda_spec.folds or CV_FOLDS
    fold_seed = derive_seed(config.base_seed, trial_id, Stream.FOLDS)
    return kfold_cv_lambda(data.design, data.response, lambda_grid(), folds, fold_seed)


def run_trial(
    config: ExperimentConfig, trial_id: int, theory_lam: float | None = None
) -> TrialRecord:
    """
    Draw one dataset, fit, compute the statistic and apply every level-q rule.

    The knockoff statistics use their own filters; the plain statistics have no
    data-driven threshold, so their per-q selection is the oracle one (largest selection
    with realised FDP <= q). ``theory_lam`` short-cuts the ORACLE rule's lambda* solve.
    """
    data = draw_trial(config, trial_id)
    design, Y, truth = data.design, data.response, data.truth

    try:
        if config.statistic == Statistic.LASSO_MAX:
            statistic = lasso_max_stat(lasso_path(design, Y, geometric_lambda_grid(design, Y)))
            return _record(config, trial_id, math.nan, None, statistic, truth)

        cv_lambda = None
        match config.lambda_spec.rule:
            case LambdaRule.FIXED:
                lam = config.lambda_spec.value
            case LambdaRule.ORACLE:
                lam = theory_lam if theory_lam is not None else theory_lambda(config)
            case LambdaRule.CV:
                lam = cv_lambda = trial_cv_lambda(config, trial_id, data)

        fit = lasso_solve(design, Y, lam)
    except NonConvergence as exc:
        raise NonConvergence(f"trial {trial_id} ({exc})") from exc

    match config.statistic:
        case Statistic.LCD:
            W = lcd_stats(fit, config.p)
            selections = [knockoff_threshold(W, q) for q in config.q_levels]
            statistic = W.values
        case Statistic.COUNTING_COEF:
            r = data.augmented.r
            selections = [counting_threshold(fit, config.p, r, q) for q in config.q_levels]
            statistic = np.abs(fit.coefficients[: config.p])
        case _:
            selections = None
            statistic = np.abs(fit.coefficients)

    return _record(config, trial_id, lam, cv_lambda, statistic, truth, selections)


def _record(config, trial_id, lam, cv_lambda, statistic, truth, selections=None):
    if selections is None:
        selections = [oracle_selection(statistic, truth, q) for q in config.q_levels]
    outcomes = tuple(_outcome(selection, truth) for selection in selections)
    logger.debug("trial %d: lambda=%.6g, %s", trial_id, lam, outcomes)
    return TrialRecord(
        trial_id=trial_id,
        lambda_used=float(lam),
        path=empirical_tradeoff(statistic, truth),
        outcomes=outcomes,
        cv_lambda=cv_lambda,
        statistic=statistic,
        truth=truth,
    )


def _outcome(selection: Selection, truth: SignalVector) -> LevelOutcome:
    fdp, tpp = empirical_rates(selection, truth)
    return LevelOutcome(selection.level_q, selection.threshold, len(selection), fdp, tpp)


def run_experiment(config: ExperimentConfig, n_jobs: int | None = None) -> list[TrialRecord]:
    """Run every trial, in parallel over ``n_jobs`` workers, sorted by trial id."""
    n_jobs = threads_from_env() if n_jobs is None else n_jobs
    theory_lam = None
    if config.lambda_spec.rule == LambdaRule.ORACLE:
        theory_lam = theory_lambda(config)
    logger.info(
        "running %d trials (n=%d, p=%d) on %d workers", config.trials, config.n, config.p, n_jobs
    )

    records = Parallel(n_jobs=n_jobs)(
        delayed(run_trial)(config, trial_id, theory_lam) for trial_id in range(config.trials)
    )
    return sorted(records, key=lambda record: record.trial_id)


def summarise(records: list[TrialRecord]) -> pd.DataFrame:
    """Per-q mean FDP with its standard error, mean TPP and mean selection size."""
    rows = [
        {"trial": record.trial_id, **vars(outcome)}
        for record in records
        for outcome in record.outcomes
    ]
    frame = pd.DataFrame(rows)
    grouped = frame.groupby("q")
    summary = pd.DataFrame(
        {
            "trials": grouped["fdp"].count(),
            "mean_fdp": grouped["fdp"].mean(),
            "se_fdp": grouped["fdp"].std(ddof=1) / np.sqrt(grouped["fdp"].count()),
            "mean_tpp": grouped["tpp"].mean(),
            "mean_selected": grouped["selected"].mean(),
        }
    )
    return summary.fillna({"se_fdp": 0.0}).reset_index()


def sup_distance(
    record: TrialRecord, curve: TradeoffCurve, min_selected: int = MIN_SELECTED
) -> float:
    """
    Largest distance from a trial's realised (tpp, fdp) process to a theory curve.

    The realised process is read off at the curve's thresholds, skipping those where fewer
    than ``min_selected`` variables are selected. Each realised point is matched to the
    nearest point of the theory curve in the (tpp, fdp) plane under the max-norm, with the
    curve linearly interpolated between its samples. NaN when no threshold qualifies.
    """
    fdp, tpp, selected = rates_on_grid(record.statistic, record.truth, curve.ts)
    finite = np.isfinite(curve.fdps) & np.isfinite(curve.tpps)
    keep = selected >= min_selected
    if not keep.any() or not finite.any():
        return math.nan

    knots = np.arange(finite.sum())
    fine = np.linspace(0, knots[-1], CURVE_REFINE * knots[-1] + 1)
    theory_fdp = np.interp(fine, knots, curve.fdps[finite])
    theory_tpp = np.interp(fine, knots, curve.tpps[finite])

    gaps = np.maximum(
        np.abs(fdp[keep, None] - theory_fdp[None, :]),
        np.abs(tpp[keep, None] - theory_tpp[None, :]),
    )
    return float(gaps.min(axis=1).max())
