"""
Empirical averages of test functions over the augmented Lasso fit against their
state-evolution limits.

For bounded continuous f on R^3,

    (1/p) sum_i f(b_i, beta_i, b_{p+i})  ->  E f(eta(Pi + tau Z), Pi, eta(tau Z'))

uniformly over lambda in compact sets, with (alpha, tau) the Model-X fixed point and
eta the soft threshold at alpha * tau. Test functions here are products of one-variable
factors, so the right side is a sum over atoms of products of one-dimensional integrals.
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from ..core.knockoffs import augment
from ..core.lasso import generate_design, lasso_path, sample_signal, simulate_response
from ..core.prior import Prior, Regime
from ..core.state_evolution import gauss_quad, normal_pdf, soft_threshold, solve_state_evolution
from ..utils.constants import Stream
from ..utils.errors import ConfigError
from ..utils.rng import derive_seed
from .experiment import threads_from_env

logger = logging.getLogger(__name__)

CONTRAST_LAMBDAS = (0.5, 2.0)
CONTRAST_POINTS = 5


def constant_one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def clipped_power(x, power: int, cap: float):
    return np.clip(x, -cap, cap) ** power


def unit_clipped_power(x, power: int, cap: float):
    """clip(x)^power rescaled onto [0, 1]; odd powers are shifted up from [-1, 1]."""
    scaled = clipped_power(x, power, cap) / cap**power
    return scaled if power % 2 == 0 else 0.5 * (scaled + 1.0)


def logistic_step(x, centre: float, sharpness: float, symmetric: bool = False):
    """Smoothed indicator of x > centre (of |x| > centre when symmetric)."""
    x = np.abs(x) if symmetric else np.asarray(x, dtype=float)
    return 1.0 / (1.0 + np.exp(-sharpness * (x - centre)))


@dataclass(frozen=True)
class ContrastFunction:
    """
    f(x, y, z) = g(x) h(y) k(z) with bounded continuous factors.

    x is the Lasso estimate of an original column, y its true coefficient and z the
    estimate of its knockoff.
    """

    name: str
    estimate: Callable = constant_one
    truth: Callable = constant_one
    knockoff: Callable = constant_one

    def __call__(self, x, y, z) -> np.ndarray:
        return self.estimate(x) * self.truth(y) * self.knockoff(z)


def default_library() -> list[ContrastFunction]:
    """Test functions with values in [0, 1], so one tolerance fits them all."""
    clip2 = partial(unit_clipped_power, power=2, cap=3.0)
    clip1 = partial(unit_clipped_power, power=1, cap=5.0)
    return [
        ContrastFunction("one"),
        ContrastFunction("clip(x)^2", estimate=clip2),
        ContrastFunction("clip(x) clip(y)", estimate=clip1, truth=clip1),
        ContrastFunction("clip(x)^2 clip(z)^2", estimate=clip2, knockoff=clip2),
        ContrastFunction(
            "step(|x|) step(y)",
            estimate=partial(logistic_step, centre=0.5, sharpness=20.0, symmetric=True),
            truth=partial(logistic_step, centre=0.5, sharpness=20.0),
        ),
        ContrastFunction(
            "step(|z|)",
            knockoff=partial(logistic_step, centre=0.5, sharpness=20.0, symmetric=True),
        ),
    ]


def soft_expectation(func: Callable, mu: float, alpha: float, tau: float) -> float:
    """E func(eta_{alpha tau}(mu + tau Z))."""
    theta = alpha * tau

    def integrand(z: float) -> float:
        return normal_pdf(z) * float(func(soft_threshold(mu + tau * z, theta)))

    return gauss_quad(integrand, kinks=((theta - mu) / tau, (-theta - mu) / tau))


def limiting_average(function: ContrastFunction, prior: Prior, alpha: float, tau: float) -> float:
    knockoff_part = soft_expectation(function.knockoff, 0.0, alpha, tau)
    total = 0.0
    for mu, mass in prior.atoms:
        truth_part = float(function.truth(mu))
        if truth_part == 0.0:
            continue
        total += mass * truth_part * soft_expectation(function.estimate, mu, alpha, tau)
    return total * knockoff_part


@dataclass(frozen=True)
class ContrastConfig:
    """
    Setting of the test-function check on Model-X augmented designs.

    Attributes:
        n (int): Rows of the design
        p (int): Original columns
        sigma (float): Noise level
        prior (Prior): Coefficient prior
        trials (int): Number of independent fits
        base_seed (int): Root of every random stream
        lambdas (tuple): Penalties checked; five log-spaced values on [0.5, 2] by default
    """

    n: int
    p: int
    sigma: float
    prior: Prior
    trials: int = 1
    base_seed: int = 0
    lambdas: tuple[float, ...] = tuple(np.geomspace(*CONTRAST_LAMBDAS, CONTRAST_POINTS))

    def __post_init__(self):
        lambdas = tuple(sorted((float(lam) for lam in self.lambdas), reverse=True))
        object.__setattr__(self, "lambdas", lambdas)
        if self.n < 1 or self.p < 1 or self.trials < 1:
            raise ConfigError("n, p and trials must be at least 1")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        if not lambdas or lambdas[-1] <= 0:
            raise ConfigError(f"penalties must be positive, got {lambdas}")

    @property
    def delta(self) -> float:
        return self.n / self.p


@dataclass(frozen=True, eq=False)
class ContrastReport:
    """
    Attributes:
        lambdas (np.ndarray): Penalties checked, descending
        names (tuple): Test-function names, one per row of the tables
        empirical (np.ndarray): Averages over the fit, functions x lambdas
        theoretical (np.ndarray): Limits, same shape
    """

    lambdas: np.ndarray
    names: tuple[str, ...]
    empirical: np.ndarray
    theoretical: np.ndarray

    @property
    def deviations(self) -> np.ndarray:
        return np.abs(self.empirical - self.theoretical)

    @property
    def max_deviation(self) -> float:
        return float(self.deviations.max())


@dataclass(frozen=True, eq=False)
class ContrastSummary:
    """Per-trial reports of one setting, sorted by trial id."""

    config: ContrastConfig
    reports: tuple[ContrastReport, ...]

    @property
    def max_deviations(self) -> np.ndarray:
        return np.array([report.max_deviation for report in self.reports])

    @property
    def median_deviation(self) -> float:
        return float(np.median(self.max_deviations))


def contrast_trial(
    config: ContrastConfig, trial_id: int, library: list[ContrastFunction] | None = None
) -> ContrastReport:
    """
    Compare test-function averages over one Model-X fit with their limits.

    The trial's streams hang off its own contrast seed, so a contrast trial never reuses
    the draw of a simulation trial with the same base seed.
    """
    library = library or default_library()
    lambdas = np.asarray(config.lambdas)
    seed = derive_seed(config.base_seed, trial_id, Stream.CONTRAST)

    X = generate_design(config.n, config.p, derive_seed(seed, 0, Stream.DESIGN))
    truth = sample_signal(config.prior, config.p, derive_seed(seed, 0, Stream.SIGNAL))
    Y = simulate_response(X, truth, config.sigma, derive_seed(seed, 0, Stream.NOISE))
    regime = Regime.model_x()
    augmented = augment(X, regime, derive_seed(seed, 0, Stream.KNOCKOFF))

    fits = lasso_path(augmented.combined, Y, lambdas)
    empirical = np.empty((len(library), lambdas.size))
    theoretical = np.empty_like(empirical)

    for k, (lam, fit) in enumerate(zip(lambdas, fits)):
        estimates, knockoffs = fit.coefficients[: config.p], fit.coefficients[config.p :]
        solution = solve_state_evolution(config.prior, config.delta, config.sigma, lam, regime)
        for i, function in enumerate(library):
            empirical[i, k] = float(np.mean(function(estimates, truth.values, knockoffs)))
            theoretical[i, k] = limiting_average(
                function, config.prior, solution.alpha, solution.tau
            )

    report = ContrastReport(lambdas, tuple(f.name for f in library), empirical, theoretical)
    logger.debug("contrast trial %d: max deviation %.4g", trial_id, report.max_deviation)
    return report


def contrast_convergence_test(
    config: ContrastConfig,
    library: list[ContrastFunction] | None = None,
    n_jobs: int | None = None,
) -> ContrastSummary:
    """
    Run every contrast trial of a setting.

    Args:
        config (ContrastConfig): Dimensions, prior, penalties and trial count
        library (list): Test functions; ``default_library()`` when omitted
        n_jobs (int | None): Worker count; read from the environment when omitted

    Returns:
        ContrastSummary: One report per trial
    """
    n_jobs = threads_from_env() if n_jobs is None else n_jobs
    reports = Parallel(n_jobs=n_jobs)(
        delayed(contrast_trial)(config, trial_id, library) for trial_id in range(config.trials)
    )
    summary = ContrastSummary(config, tuple(reports))
    logger.info(
        "contrast check p=%d over %d trials: median max deviation %.4g",
        config.p,
        config.trials,
        summary.median_deviation,
    )
    return summary
