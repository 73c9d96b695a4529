"""
Soft-thresholding expectations under discrete priors and the AMP state-evolution solvers.

For a plain n x p design with n / p = delta, the pair (alpha, tau) solves

    tau^2  = sigma^2 + E(eta_{alpha tau}(Pi + tau Z) - Pi)^2 / delta
    lambda = (1 - P(|Pi + tau Z| >= alpha tau) / delta) * alpha * tau

Augmented designs are reduced to this system by ``effective_problem``.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect, brentq
from scipy.special import ndtr

from ..utils.config import DEFAULT_SETTINGS, SolverSettings
from ..utils.constants import (
    ALPHA0_BRACKET,
    ALPHA0_TOL,
    QUAD_EPSABS,
    QUAD_LIMIT,
    RegimeKind,
)
from ..utils.errors import AmbiguousSolution, NoSolution, NonConvergence
from .prior import Prior, Regime, effective_problem

logger = logging.getLogger(__name__)

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
SQRT_HALF = math.sqrt(0.5)
TAU_CEILING = 1e8
ROOT_XTOL = 1e-12
SIGN_FLOOR = 1e-12


def soft_threshold(x, theta):
    """eta_theta(x) = sgn(x) * (|x| - theta)_+, elementwise."""
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


def normal_pdf(z: float) -> float:
    return INV_SQRT_2PI * math.exp(-0.5 * z * z)


def normal_cdf(z: float) -> float:
    # scalar version of scipy.special.ndtr, cheaper inside quadrature integrands
    return 0.5 * math.erfc(-z * SQRT_HALF)


def gauss_quad(
    integrand: Callable[[float], float],
    kinks: tuple[float, ...] = (),
    epsabs: float = QUAD_EPSABS,
) -> float:
    """Integrate ``integrand`` over [-12, 12], splitting at the kinks inside the range."""
    points = sorted(k for k in kinks if -QUAD_LIMIT < k < QUAD_LIMIT)
    value, _ = quad(
        integrand,
        -QUAD_LIMIT,
        QUAD_LIMIT,
        points=points or None,
        epsabs=epsabs,
        epsrel=1e-10,
        limit=200,
    )
    return value


def alpha_min(delta: float) -> float:
    """
    Root alpha_0 of (1 + t^2) Phi(-t) - t phi(t) = delta / 2.

    The left side is strictly decreasing, so bisection on [-20, 20] converges. Callers
    clamp the admissible alpha range at max(alpha_0, 0).
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")

    def gap(t: float) -> float:
        return (1.0 + t * t) * ndtr(-t) - t * normal_pdf(t) - 0.5 * delta

    lo, hi = ALPHA0_BRACKET
    if gap(lo) * gap(hi) > 0:
        raise NoSolution(f"alpha_0 is not bracketed by [{lo}, {hi}] for delta={delta}")
    return float(bisect(gap, lo, hi, xtol=ALPHA0_TOL))


def atom_mse(mu: float, alpha: float, tau: float) -> float:
    """E(eta_{alpha tau}(mu + tau Z) - mu)^2 for a single atom."""
    if tau == 0.0:
        return 0.0
    theta = alpha * tau

    def integrand(z: float) -> float:
        x = mu + tau * z
        if x > theta:
            estimate = x - theta
        elif x < -theta:
            estimate = x + theta
        else:
            estimate = 0.0
        return normal_pdf(z) * (estimate - mu) ** 2

    return gauss_quad(integrand, kinks=((theta - mu) / tau, (-theta - mu) / tau))


def mse_expectation(prior: Prior, alpha: float, tau: float) -> float:
    """E[(eta_{alpha tau}(Pi + tau Z) - Pi)^2], mass-weighted over the atoms."""
    return sum(mass * atom_mse(mu, alpha, tau) for mu, mass in prior.atoms)


def knockoff_mse(alpha: float, tau: float) -> float:
    """E eta_{alpha tau}(tau Z)^2, the contribution of one independent null column."""
    return atom_mse(0.0, alpha, tau)


def atom_exceed(mu: float, alpha: float, tau: float, t: float) -> float:
    """P(|mu + tau Z| >= alpha tau + t)."""
    edge = alpha * tau + t
    return normal_cdf((mu - edge) / tau) + normal_cdf((-mu - edge) / tau)


def exceed_prob(prior: Prior, alpha: float, tau: float, t: float = 0.0) -> float:
    """P(|Pi + tau Z| >= alpha tau + t), mass-weighted over the atoms."""
    return sum(mass * atom_exceed(mu, alpha, tau, t) for mu, mass in prior.atoms)


@dataclass(frozen=True)
class TailSplit:
    """Exceedance probability conditional on Pi = 0 and on Pi != 0."""

    null: float
    nonnull: float


def exceed_prob_split(prior: Prior, alpha: float, tau: float, t: float = 0.0) -> TailSplit:
    null = atom_exceed(0.0, alpha, tau, t)
    epsilon = prior.epsilon
    if epsilon == 0.0:
        return TailSplit(null=null, nonnull=0.0)
    nonnull = sum(mass * atom_exceed(mu, alpha, tau, t) for mu, mass in prior.nonnull_atoms)
    return TailSplit(null=null, nonnull=nonnull / epsilon)


def stationarity_gap(prior: Prior, alpha: float, tau: float) -> float:
    """
    E[Z + alpha; Pi + tau Z < -alpha tau] - E[Z - alpha; Pi + tau Z > alpha tau].

    This is the alpha-derivative of E(eta_{alpha tau}(Pi + tau Z) - Pi)^2 / tau^2 at fixed
    tau, up to a factor 2; it vanishes where tau is smallest along the fixed-point curve.
    """
    total = 0.0
    for mu, mass in prior.atoms:
        lower = -alpha - mu / tau
        upper = alpha - mu / tau
        below = -normal_pdf(lower) + alpha * ndtr(lower)
        above = normal_pdf(upper) - alpha * ndtr(-upper)
        total += mass * (below - above)
    return total


def tau_rhs(prior: Prior, delta: float, sigma: float, alpha: float, tau: float) -> float:
    return sigma**2 + mse_expectation(prior, alpha, tau) / delta


def lambda_of(prior: Prior, delta: float, alpha: float, tau: float) -> float:
    return (1.0 - exceed_prob(prior, alpha, tau) / delta) * alpha * tau


def tau_fixed_point(
    prior: Prior,
    delta: float,
    sigma: float,
    alpha: float,
    tau0: float | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> float:
    """
    Solve the first state-evolution equation for tau at fixed alpha.

    Iterates tau^2 <- (1 - d) tau^2 + d * RHS(tau) with damping d until |delta tau| is below
    the tolerance. Starts from the alpha -> infinity value when no warm start is given.

    Raises:
        NonConvergence: When the iteration cap is hit or tau diverges
    """
    tau = tau0 if tau0 else math.sqrt(sigma**2 + prior.second_moment() / delta)
    ceiling = TAU_CEILING * max(1.0, sigma, math.sqrt(prior.second_moment()))
    damping = settings.damping

    for _ in range(settings.max_iter):
        if tau == 0.0:
            return 0.0
        squared = (1.0 - damping) * tau**2 + damping * tau_rhs(prior, delta, sigma, alpha, tau)
        updated = math.sqrt(squared)
        if abs(updated - tau) <= settings.tau_tol:
            return updated
        if updated > ceiling:
            raise NonConvergence(f"tau diverges at alpha={alpha:.6g}")
        tau = updated

    raise NonConvergence(f"tau iteration at alpha={alpha:.6g} after {settings.max_iter} steps")


@dataclass(frozen=True)
class AlphaScan:
    """Fixed-point tau on a log-spaced alpha grid; NaN where the iteration failed."""

    alphas: np.ndarray
    taus: np.ndarray

    def converged(self) -> tuple[np.ndarray, np.ndarray]:
        ok = np.isfinite(self.taus)
        return self.alphas[ok], self.taus[ok]


@lru_cache(maxsize=256)
def alpha_scan(
    prior: Prior, delta: float, sigma: float, settings: SolverSettings = DEFAULT_SETTINGS
) -> AlphaScan:
    """
    Tabulate tau(alpha) over (max(alpha_0, 0) + offset, alpha_max).

    The grid is walked downwards from alpha_max with warm starts; below the first alpha
    whose iteration fails, tau only grows, so the walk stops there.
    """
    lower = max(alpha_min(delta), 0.0) + settings.alpha_offset
    alphas = np.geomspace(lower, settings.alpha_max, settings.scan_points)
    taus = np.full(alphas.shape, np.nan)

    tau = None
    for i in reversed(range(alphas.size)):
        try:
            tau = tau_fixed_point(prior, delta, sigma, alphas[i], tau0=tau, settings=settings)
        except NonConvergence as exc:
            logger.debug("alpha scan stops at alpha=%.6g: %s", alphas[i], exc)
            break
        taus[i] = tau

    alphas.flags.writeable = False
    taus.flags.writeable = False
    logger.debug(
        "alpha scan delta=%.4g sigma=%.4g: %d/%d converged",
        delta,
        sigma,
        np.isfinite(taus).sum(),
        alphas.size,
    )
    return AlphaScan(alphas=alphas, taus=taus)


def root_along_scan(
    prior: Prior,
    delta: float,
    sigma: float,
    target: Callable[[float, float], float],
    settings: SolverSettings = DEFAULT_SETTINGS,
    label: str = "lambda",
) -> tuple[float, float]:
    """
    Find alpha with target(alpha, tau(alpha)) = 0 on the scanned alpha interval.

    The scan must show exactly one sign change; the bracket is then refined with Brent's
    method, re-solving tau at every trial alpha from a warm start.

    Returns:
        tuple: (alpha, tau)

    Raises:
        NoSolution: No sign change on the admissible interval
        AmbiguousSolution: More than one sign change
    """
    alphas, taus = alpha_scan(prior, delta, sigma, settings).converged()
    if alphas.size < 2:
        raise NoSolution("the tau iteration converges nowhere on the alpha interval")

    values = np.array([target(a, t) for a, t in zip(alphas, taus)])
    # values this far below the largest one come from underflow in the far tail; no sign
    floor = max(SIGN_FLOOR * float(np.abs(values).max(initial=0.0)), np.finfo(float).tiny)
    nonzero = np.abs(values) > floor
    alphas, taus, values = alphas[nonzero], taus[nonzero], values[nonzero]
    if values.size < 2:
        raise NoSolution(f"{label} vanishes on the whole alpha interval")

    changes = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    if changes.size == 0:
        raise NoSolution(
            f"{label} has no sign change on alpha in [{alphas[0]:.4g}, {alphas[-1]:.4g}]"
        )
    if changes.size > 1:
        raise AmbiguousSolution(f"{label} changes sign {changes.size} times")

    i = changes[0]
    warm = {"tau": float(taus[i + 1])}

    def along_curve(alpha: float) -> float:
        warm["tau"] = tau_fixed_point(prior, delta, sigma, alpha, warm["tau"], settings)
        return target(alpha, warm["tau"])

    alpha = brentq(along_curve, alphas[i], alphas[i + 1], xtol=ROOT_XTOL)
    tau = tau_fixed_point(prior, delta, sigma, alpha, warm["tau"], settings)
    return float(alpha), float(tau)


@dataclass(frozen=True)
class SeSolution:
    """
    A solved state-evolution fixed point.

    Attributes:
        alpha (float): Threshold in units of tau
        tau (float): Effective noise level
        lam (float): Lasso penalty the pair corresponds to
        regime (Regime): Design the Lasso is fit on
        residual (float): Largest absolute violation of the two equations
    """

    alpha: float
    tau: float
    lam: float
    regime: Regime
    residual: float

    @property
    def theta(self) -> float:
        return self.alpha * self.tau


def reduced_residuals(
    prior: Prior,
    delta: float,
    sigma: float,
    lam: float,
    alpha: float,
    tau: float,
    regime: Regime,
) -> tuple[float, float]:
    """Violations of the plain-design system evaluated on the effective problem."""
    eff_prior, eff_delta = effective_problem(prior, delta, regime)
    return (
        tau**2 - tau_rhs(eff_prior, eff_delta, sigma, alpha, tau),
        lam - lambda_of(eff_prior, eff_delta, alpha, tau),
    )


def regime_residuals(
    prior: Prior,
    delta: float,
    sigma: float,
    lam: float,
    alpha: float,
    tau: float,
    regime: Regime,
) -> tuple[float, float]:
    """
    Violations of the regime's own equation system, without reduction.

    With c fake columns per original column the system reads

        tau^2  = sigma^2 + [E(eta(Pi + tau Z) - Pi)^2 + c E eta(tau Z)^2] / delta
        lambda = [1 - P(|Pi + tau Z| > alpha tau) / delta - c P(|tau Z| > alpha tau) / delta]
                 * alpha * tau
    """
    if regime.kind == RegimeKind.CV:
        delta = delta * (regime.folds - 1) / regime.folds
    fakes = regime.fake_columns_per_original()

    error = mse_expectation(prior, alpha, tau) + fakes * knockoff_mse(alpha, tau)
    rhs = sigma**2 + error / delta
    selected = exceed_prob(prior, alpha, tau) + fakes * atom_exceed(0.0, alpha, tau, 0.0)
    return tau**2 - rhs, lam - (1.0 - selected / delta) * alpha * tau


def solve_state_evolution(
    prior: Prior,
    delta: float,
    sigma: float,
    lam: float,
    regime: Regime | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> SeSolution:
    """
    Solve the regime's state-evolution system for (alpha, tau) at penalty ``lam``.

    Args:
        prior (Prior): Coefficient prior
        delta (float): n / p of the original design
        sigma (float): Noise level
        lam (float): Lasso penalty
        regime (Regime): Design the Lasso is fit on; Original when omitted
        settings (SolverSettings): Numerical knobs

    Returns:
        SeSolution: The fixed point, certified to the residual tolerance

    Raises:
        NoSolution: ``lam`` is outside the achievable range
        NonConvergence: The inner iteration failed or the residual is too large
    """
    regime = regime or Regime.original()
    if lam <= 0 or delta <= 0 or sigma < 0:
        raise ValueError("need lam > 0, delta > 0 and sigma >= 0")
    if regime.kind == RegimeKind.CV:
        raise ValueError("cross-validation limits are solved by cv_amp")

    eff_prior, eff_delta = effective_problem(prior, delta, regime)

    def lambda_gap(alpha: float, tau: float) -> float:
        return lambda_of(eff_prior, eff_delta, alpha, tau) - lam

    alpha, tau = root_along_scan(eff_prior, eff_delta, sigma, lambda_gap, settings)
    residual = max(
        abs(r) for r in reduced_residuals(prior, delta, sigma, lam, alpha, tau, regime)
    )
    if residual > settings.residual_tol:
        raise NonConvergence(f"residual {residual:.3g} at lambda={lam:.6g}")

    logger.debug(
        "state evolution %s lambda=%.6g: alpha=%.8g tau=%.8g", regime.kind, lam, alpha, tau
    )
    return SeSolution(alpha=alpha, tau=tau, lam=lam, regime=regime, residual=residual)


def achievable_lambdas(
    prior: Prior,
    delta: float,
    sigma: float,
    regime: Regime | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> tuple[float, float]:
    """Smallest positive and largest lambda reached on the converged part of the scan."""
    eff_prior, eff_delta = effective_problem(prior, delta, regime or Regime.original())
    alphas, taus = alpha_scan(eff_prior, eff_delta, sigma, settings).converged()
    lams = np.array([lambda_of(eff_prior, eff_delta, a, t) for a, t in zip(alphas, taus)])
    positive = lams[lams > 0]
    if positive.size == 0:
        raise NoSolution("no positive lambda is achievable")
    return float(positive.min()), float(positive.max())
