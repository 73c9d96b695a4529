"""Quick invariant checks runnable from the command line."""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core.knockoffs import WStats, knockoff_threshold
from ..core.lasso import generate_design, kkt_violation, lasso_path, simulate_response
from ..core.prior import Prior, Regime
from ..core.state_evolution import alpha_min, regime_residuals, solve_state_evolution
from ..core.theory import ZERO_PLUS, LcdModel, invert_fdp
from ..core.tuning import cv_amp
from ..utils.constants import KKT_RTOL, RESIDUAL_TOL, Stream
from ..utils.errors import LassoKnockoffsError
from ..utils.rng import derive_seed

logger = logging.getLogger(__name__)

PRIOR = Prior.two_point(0.1, 4.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_alpha_min() -> tuple[bool, str]:
    value = alpha_min(1.0)
    return abs(value) < 1e-8, f"alpha_0(1) = {value:.3g}"


def check_regime_residuals() -> tuple[bool, str]:
    worst = 0.0
    for regime in (Regime.original(), Regime.model_x(), Regime.counting(0.3)):
        solution = solve_state_evolution(PRIOR, 1.0, 1.0, 1.0, regime)
        residuals = regime_residuals(
            PRIOR, 1.0, 1.0, 1.0, solution.alpha, solution.tau, regime
        )
        worst = max(worst, *map(abs, residuals))
    return worst <= RESIDUAL_TOL, f"largest residual {worst:.3g}"


def check_fdp_overestimate() -> tuple[bool, str]:
    model = LcdModel(PRIOR, 1.0, 1.0, 1.0)
    gaps = [model.point(t) for t in model.grid[::20]]
    worst = min(point.fdp_hat - point.fdp for point in gaps)
    return worst >= -1e-12, f"min fdp_hat - fdp = {worst:.3g}"


def check_cv_limit() -> tuple[bool, str]:
    solution = cv_amp(PRIOR, 1.0, 1.0, 10)
    return solution.residual <= RESIDUAL_TOL, f"lambda_cv = {solution.lambda_cv:.6g}"


def check_threshold_inversion() -> tuple[bool, str]:
    model = LcdModel(PRIOR, 1.0, 1.0, 1.0)
    t = invert_fdp(model, 0.1, use_hat=True)
    value = model.fdp(t, use_hat=True)
    return abs(value - 0.1) < 1e-6 or t == ZERO_PLUS, f"fdp_hat(t) = {value:.6g}"


def check_lasso_kkt() -> tuple[bool, str]:
    X = generate_design(50, 80, derive_seed(0, 0, Stream.DESIGN))
    beta = np.zeros(80)
    beta[:8] = 3.0
    Y = simulate_response(X, beta, 0.5, derive_seed(0, 0, Stream.NOISE))
    fits = lasso_path(X, Y, np.geomspace(2.0, 0.2, 10))
    limit = KKT_RTOL * max(1.0, float(np.abs(X.entries.T @ Y).max()))
    worst = max(kkt_violation(X, Y, fit.coefficients, fit.lam) for fit in fits)
    return worst <= limit, f"largest KKT violation {worst:.3g}"


def check_knockoff_filter() -> tuple[bool, str]:
    W = WStats(np.array([5.0, 4.0, 3.0, 2.0, 1.0, -0.5, 0.0]), 1.0)
    selection = knockoff_threshold(W, 0.3)
    return selection.threshold == 1.0 and len(selection) == 5, f"t = {selection.threshold}"


def check_seed_streams() -> tuple[bool, str]:
    seeds = {derive_seed(7, trial, stream) for trial in range(10) for stream in Stream}
    return len(seeds) == 10 * len(Stream), f"{len(seeds)} distinct seeds"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "alpha_0 at delta = 1": check_alpha_min,
    "regime residuals": check_regime_residuals,
    "fdp_hat >= fdp": check_fdp_overestimate,
    "cross-validation limit": check_cv_limit,
    "threshold inversion": check_threshold_inversion,
    "lasso KKT certificate": check_lasso_kkt,
    "knockoff filter": check_knockoff_filter,
    "seed streams": check_seed_streams,
}


def run_selftest() -> list[CheckResult]:
    results = []
    for name, check in CHECKS.items():
        try:
            passed, detail = check()
        except LassoKnockoffsError as exc:
            passed, detail = False, str(exc)
        logger.debug("selftest %s: %s (%s)", name, passed, detail)
        results.append(CheckResult(name, bool(passed), detail))
    return results
