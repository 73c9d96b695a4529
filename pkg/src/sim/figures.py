"""
Reproduction of the reference figure settings as CSV files.

Each figure writer takes an output directory and returns the paths it wrote. Empirical
figures run at desk scale by default; ``full_size`` restores the full reference dimensions.
"""

import logging
import math
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..core.prior import Prior, Regime
from ..core.theory import (
    CountingLassoMaxModel,
    CountingModel,
    LassoCoefModel,
    LassoMaxModel,
    LcdModel,
    counting_curve,
    lc_curve,
    lcd_curve,
    power_at_level,
)
from ..core.tuning import cv_amp, lambda_grid, oracle_lambda_star
from ..utils.config import DEFAULT_SETTINGS, SolverSettings
from ..utils.constants import CV_FOLDS, Statistic
from ..utils.errors import NoSolution, UnknownFigure
from .experiment import (
    ExperimentConfig,
    LambdaSpec,
    run_experiment,
    sup_distance,
    threads_from_env,
    trial_cv_lambda,
)
from .export import paths_frame, selections_frame, write_curves_csv, write_frame

logger = logging.getLogger(__name__)

COUNTING_RATIO = 0.3
FIG3_DELTAS = (0.5, 1.0, 1.5, 2.0)
FIG3_MARKERS = (0.01, 0.05, 0.1)
FIG3_Q_GRID = np.linspace(0.01, 0.3, 50)
FIG5_EPSILONS = (0.05, 0.1, 0.2)
TARGET_Q = 0.1


def chord_defect(x, y) -> np.ndarray:
    """
    Height of each interior point below the chord through its neighbours.

    For a convex function of x every entry is >= 0. Points are sorted by x; triples whose
    outer x values coincide are skipped.
    """
    order = np.argsort(np.asarray(x, dtype=float), kind="stable")
    x = np.asarray(x, dtype=float)[order]
    y = np.asarray(y, dtype=float)[order]
    left, middle, right = slice(None, -2), slice(1, -1), slice(2, None)
    span = x[right] - x[left]
    keep = span > 0
    weight = np.divide(x[middle] - x[left], span, out=np.zeros_like(span), where=keep)
    chord = y[left] + weight * (y[right] - y[left])
    return (chord - y[middle])[keep]


def power_map(
    prior: Prior,
    delta: float,
    sigma: float,
    q_grid,
    ratio: float | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> pd.DataFrame:
    """
    Oracle power against knockoff power over target levels.

    The oracle thresholds |beta_j(lambda*)| at the true fdp; knockoffs run the LCD filter
    at lambda_cv through its fdp estimate; with ``ratio`` the counting filter at the
    counting regime's lambda* is added.
    """
    lam_star = oracle_lambda_star(prior, delta, sigma, settings=settings)
    lam_cv = cv_amp(prior, delta, sigma, CV_FOLDS, settings).lambda_cv
    oracle = LassoCoefModel(prior, delta, sigma, lam_star, settings)
    knockoff = LcdModel(prior, delta, sigma, lam_cv, settings)
    columns = {
        "q": np.asarray(q_grid, dtype=float),
        "oracle_power": [power_at_level(oracle, q) for q in q_grid],
        "knockoff_power": [power_at_level(knockoff, q, use_hat=True) for q in q_grid],
    }
    if ratio is not None:
        regime = Regime.counting(ratio)
        lam = oracle_lambda_star(prior, delta, sigma, regime, settings)
        counting = CountingModel(prior, delta, sigma, lam, ratio, settings)
        columns["counting_power"] = [power_at_level(counting, q, use_hat=True) for q in q_grid]
    return pd.DataFrame(columns)


def power_versus_lambda(
    prior: Prior,
    delta: float,
    sigma: float,
    q: float,
    lambdas,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> pd.DataFrame:
    """Limiting LCD knockoff power at level q for each fixed lambda; NaN where unsolvable."""
    powers = []
    for lam in lambdas:
        try:
            model = LcdModel(prior, delta, sigma, float(lam), settings)
        except NoSolution:
            powers.append(math.nan)
            continue
        powers.append(power_at_level(model, q, use_hat=True))
    return pd.DataFrame({"lambda": np.asarray(lambdas, dtype=float), "power": powers})


def fig2(out_dir: Path, **_) -> list[Path]:
    prior, delta, sigma = Prior.two_point(0.1, 10.0), 0.5, 1.0
    lam_star = oracle_lambda_star(prior, delta, sigma)
    lam_cv = cv_amp(prior, delta, sigma, CV_FOLDS).lambda_cv
    counting_star = oracle_lambda_star(prior, delta, sigma, Regime.counting(COUNTING_RATIO))
    logger.info("fig2: lambda*=%.6g, lambda_cv=%.6g", lam_star, lam_cv)

    curves = [
        LassoMaxModel(prior, delta, sigma).curve(),
        lc_curve(prior, delta, sigma, lam_star),
        lcd_curve(prior, delta, sigma, lam_cv),
        counting_curve(prior, delta, sigma, counting_star, COUNTING_RATIO),
    ]
    counting_lm = CountingLassoMaxModel(prior, delta, sigma, COUNTING_RATIO).curve()
    return [
        write_curves_csv(curves, out_dir / "fig2_theory.csv"),
        write_curves_csv([counting_lm], out_dir / "fig2_counting_lasso_max.csv"),
    ]


def fig3(out_dir: Path, **_) -> list[Path]:
    prior, sigma = Prior.two_point(0.1, 4.0), 1.0
    grids, markers = [], []
    for delta in FIG3_DELTAS:
        logger.info("fig3: delta=%g", delta)
        grid = power_map(prior, delta, sigma, FIG3_Q_GRID, COUNTING_RATIO)
        grids.append(grid.assign(delta=delta))
        markers.append(power_map(prior, delta, sigma, FIG3_MARKERS).assign(delta=delta))
    return [
        write_frame(_delta_first(grids), out_dir / "fig3_power_map.csv"),
        write_frame(_delta_first(markers), out_dir / "fig3_markers.csv"),
    ]


def _delta_first(frames: list[pd.DataFrame]) -> pd.DataFrame:
    frame = pd.concat(frames, ignore_index=True)
    return frame[["delta"] + [column for column in frame.columns if column != "delta"]]


def fig4(out_dir: Path, trials: int | None = None, n_jobs: int = 1, **_) -> list[Path]:
    prior, sigma = Prior.two_point(0.1, 4.0), 1.0
    lam_cv = cv_amp(prior, 1.0, sigma, CV_FOLDS).lambda_cv
    config = ExperimentConfig(
        n=1000,
        p=1000,
        sigma=sigma,
        prior=prior,
        lambda_spec=LambdaSpec.fixed(lam_cv),
        statistic=Statistic.LCD,
        q_levels=(TARGET_Q,),
        trials=trials or 15,
    )
    curve = lcd_curve(prior, config.delta, sigma, lam_cv)
    records = run_experiment(config, n_jobs)
    distances = pd.DataFrame(
        {
            "trial": [record.trial_id for record in records],
            "sup_distance": [sup_distance(record, curve) for record in records],
        }
    )
    logger.info("fig4: median sup distance %.4g", distances["sup_distance"].median())
    return [
        write_curves_csv([curve], out_dir / "fig4_theory.csv"),
        write_frame(paths_frame(records), out_dir / "fig4_paths.csv"),
        write_frame(distances, out_dir / "fig4_sup_distance.csv"),
    ]


def fig5(
    out_dir: Path, full_size: bool = False, trials: int | None = None, n_jobs: int = 1, **_
) -> list[Path]:
    delta, sigma, size = 1.0, 1.0, 5000 if full_size else 1000
    powers, references, selections = [], [], []
    for epsilon in FIG5_EPSILONS:
        prior = Prior.two_point(epsilon, 5.0)
        lam_cv = cv_amp(prior, delta, sigma, CV_FOLDS).lambda_cv
        lam_star = oracle_lambda_star(prior, delta, sigma, Regime.model_x())
        counting_lm = CountingLassoMaxModel(prior, delta, sigma, COUNTING_RATIO)
        config = ExperimentConfig(
            n=size,
            p=size,
            sigma=sigma,
            prior=prior,
            lambda_spec=LambdaSpec.cv(CV_FOLDS),
            statistic=Statistic.LCD,
            q_levels=(TARGET_Q,),
            trials=trials or 10,
        )
        records = run_experiment(config, n_jobs)
        logger.info("fig5: epsilon=%g lambda_cv=%.6g lambda*=%.6g", epsilon, lam_cv, lam_star)

        power = power_versus_lambda(prior, delta, sigma, TARGET_Q, lambda_grid())
        powers.append(power.assign(epsilon=epsilon))
        references.append(
            {
                "epsilon": epsilon,
                "lambda_cv": lam_cv,
                "lambda_star": lam_star,
                "counting_lasso_max_power": power_at_level(counting_lm, TARGET_Q, use_hat=True),
                "mean_cv_lambda": float(np.mean([record.cv_lambda for record in records])),
            }
        )
        selections.append(selections_frame(records).assign(epsilon=epsilon))

    return [
        write_frame(pd.concat(powers, ignore_index=True), out_dir / "fig5_power.csv"),
        write_frame(pd.DataFrame(references), out_dir / "fig5_reference.csv"),
        write_frame(pd.concat(selections, ignore_index=True), out_dir / "fig5_trials.csv"),
    ]


def fig6(
    out_dir: Path, full_size: bool = False, trials: int | None = None, n_jobs: int = 1, **_
) -> list[Path]:
    prior, sigma = Prior.two_point(0.1, 5.0), 1.0
    config = ExperimentConfig(
        n=1000,
        p=1500,
        sigma=sigma,
        prior=prior,
        lambda_spec=LambdaSpec.cv(CV_FOLDS),
        statistic=Statistic.LCD,
        q_levels=(TARGET_Q,),
        trials=trials or (1000 if full_size else 200),
    )
    lam_cv = cv_amp(prior, config.delta, sigma, CV_FOLDS).lambda_cv
    estimates = Parallel(n_jobs=n_jobs)(
        delayed(trial_cv_lambda)(config, trial_id) for trial_id in range(config.trials)
    )
    logger.info("fig6: lambda_cv=%.6g, mean estimate %.6g", lam_cv, np.mean(estimates))
    return [
        write_frame(
            pd.DataFrame({"trial": range(config.trials), "cv_lambda": estimates}),
            out_dir / "fig6_cv_lambda.csv",
        ),
        write_frame(pd.DataFrame({"lambda_cv": [lam_cv]}), out_dir / "fig6_reference.csv"),
    ]


FIGURES: dict[str, Callable[..., list[Path]]] = {
    "fig2": fig2,
    "fig3": fig3,
    "fig4": fig4,
    "fig5": fig5,
    "fig6": fig6,
}


def reproduce(
    figure_id: str,
    out_dir: str | Path,
    full_size: bool = False,
    trials: int | None = None,
    n_jobs: int | None = None,
) -> list[Path]:
    """
    Write the CSV files of one figure.

    Args:
        figure_id (str): One of fig2 ... fig6
        out_dir (str | Path): Directory for the CSV files, created if missing
        full_size (bool): Full reference dimensions instead of the desk-scale defaults
        trials (int | None): Override of the trial count of empirical figures
        n_jobs (int | None): Worker count; read from the environment when omitted

    Returns:
        list: Paths written

    Raises:
        UnknownFigure: ``figure_id`` names no figure
    """
    if figure_id not in FIGURES:
        raise UnknownFigure(f"{figure_id!r}, expected one of {sorted(FIGURES)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_jobs = threads_from_env() if n_jobs is None else n_jobs
    return FIGURES[figure_id](out_dir, full_size=full_size, trials=trials, n_jobs=n_jobs)
