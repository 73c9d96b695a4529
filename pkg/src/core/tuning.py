import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..utils.config import DEFAULT_SETTINGS, SolverSettings
from ..utils.constants import LAMBDA_BOUNDS, LAMBDA_GRID_POINTS, STAR_XATOL
from ..utils.errors import NoSolution, NonConvergence
from .prior import Prior, Regime, effective_problem
from .state_evolution import (
    lambda_of,
    root_along_scan,
    solve_state_evolution,
    stationarity_gap,
    tau_rhs,
)

logger = logging.getLogger(__name__)


def lambda_grid(points: int = LAMBDA_GRID_POINTS, bounds=LAMBDA_BOUNDS) -> np.ndarray:
    """Log-spaced lambda values, ascending."""
    return np.geomspace(bounds[0], bounds[1], points)


def tau_profile(
    prior: Prior,
    delta: float,
    sigma: float,
    lambdas,
    regime: Regime | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> np.ndarray:
    """Solved tau at each lambda; inf where lambda is out of the achievable range."""
    taus = []
    for lam in lambdas:
        try:
            taus.append(solve_state_evolution(prior, delta, sigma, lam, regime, settings).tau)
        except NoSolution:
            taus.append(math.inf)
    return np.array(taus)


def oracle_lambda_star(
    prior: Prior,
    delta: float,
    sigma: float,
    regime: Regime | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> float:
    """
    The lambda minimising the solved tau, i.e. the asymptotic estimation error.

    A coarse log-spaced grid over [0.01, 4] locates the minimum; a bounded Brent search over
    log lambda between the grid minimum's neighbours then refines it.

    Args:
        prior (Prior): Coefficient prior
        delta (float): n / p of the original design
        sigma (float): Noise level
        regime (Regime): Design the Lasso is fit on; Original when omitted

    Returns:
        float: lambda*

    Raises:
        NoSolution: No lambda in the window is achievable
    """
    coarse = lambda_grid()
    taus = tau_profile(prior, delta, sigma, coarse, regime, settings)
    if not np.isfinite(taus).any():
        raise NoSolution(f"no achievable lambda in {LAMBDA_BOUNDS}")

    k = int(np.argmin(taus))
    low, high = coarse[max(k - 1, 0)], coarse[min(k + 1, coarse.size - 1)]

    def tau_at(log_lam: float) -> float:
        try:
            lam = math.exp(log_lam)
            return solve_state_evolution(prior, delta, sigma, lam, regime, settings).tau
        except NoSolution:
            return math.inf

    result = minimize_scalar(
        tau_at,
        bounds=(math.log(low), math.log(high)),
        method="bounded",
        options={"xatol": STAR_XATOL},
    )
    lam_star = math.exp(result.x)
    logger.debug("lambda* = %.8g (tau = %.8g)", lam_star, result.fun)
    return lam_star


@dataclass(frozen=True)
class CvSolution:
    """
    Limit of K-fold cross-validated lambda on the Model-X augmented design.

    Attributes:
        alpha_cv (float): Threshold in units of tau at the cross-validated fixed point
        tau_cv (float): Smallest tau along the fixed-point curve of the training problem
        lambda_cv (float): Penalty realising it
        folds (int): Number of folds K
        residual (float): Largest violation of the two defining equations
    """

    alpha_cv: float
    tau_cv: float
    lambda_cv: float
    folds: int
    residual: float


def cv_amp(
    prior: Prior,
    delta: float,
    sigma: float,
    folds: int,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> CvSolution:
    """
    Solve the cross-validation fixed point.

    Every training fold sees (K - 1) n / K rows, so cross-validation picks the lambda that
    minimises tau on the augmented problem with delta (K - 1) / K. Along the tau(alpha)
    curve the minimum is where the alpha-derivative of the error term vanishes; that
    stationarity equation replaces the lambda equation, and lambda_cv is read off the
    lambda equation afterwards.

    Raises:
        NoSolution: The stationarity gap does not change sign on the alpha interval
        NonConvergence: The solution misses the residual tolerance
    """
    regime = Regime.cv(folds)
    eff_prior, eff_delta = effective_problem(prior, delta, regime)

    def gap(alpha: float, tau: float) -> float:
        return stationarity_gap(eff_prior, alpha, tau)

    alpha, tau = root_along_scan(
        eff_prior, eff_delta, sigma, gap, settings, label="stationarity gap"
    )
    lam = lambda_of(eff_prior, eff_delta, alpha, tau)
    if lam <= 0:
        raise NoSolution(f"cross-validated lambda {lam:.4g} is not positive")

    residual = max(
        abs(tau**2 - tau_rhs(eff_prior, eff_delta, sigma, alpha, tau)),
        abs(gap(alpha, tau)),
    )
    if residual > settings.residual_tol:
        raise NonConvergence(f"CV fixed point residual {residual:.3g}")

    logger.debug("cv_amp K=%d: alpha=%.8g tau=%.8g lambda=%.8g", folds, alpha, tau, lam)
    return CvSolution(
        alpha_cv=alpha, tau_cv=tau, lambda_cv=lam, folds=folds, residual=residual
    )
