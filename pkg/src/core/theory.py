"""
Asymptotic FDP / TPP / estimated-FDP tradeoff curves.

Each statistic gets a model object that carries the solved state-evolution fixed point of
its regime and evaluates curve points lazily:

    LassoCoefModel         |beta_j(lambda)| on the plain design
    LassoMaxModel          first entry time on the plain design's Lasso path
    LcdModel               |beta_j| - |beta_{p+j}| on the Model-X augmented design
    CountingModel          |beta_j| with a shared pool of c * p fake columns
    CountingLassoMaxModel  first entry time with the same pool
"""

import logging
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ..utils.config import DEFAULT_SETTINGS, SolverSettings
from ..utils.constants import (
    LM_GRID_POINTS,
    MONOTONE_TOL,
    QUAD_LIMIT,
    T_GRID_HIGH,
    T_GRID_LOW,
    T_GRID_POINTS,
    TAIL_EPSABS,
    Message,
    Statistic,
)
from ..utils.errors import NotAchievable, NonMonotoneWarning, SignedPriorRequired
from .prior import Prior, Regime
from .state_evolution import (
    SeSolution,
    achievable_lambdas,
    atom_exceed,
    exceed_prob_split,
    normal_cdf,
    normal_pdf,
    solve_state_evolution,
)

logger = logging.getLogger(__name__)

# smallest positive float; stands for "any t > 0 will do"
ZERO_PLUS = float(np.nextafter(0.0, 1.0))


def proportion(numerator: float, denominator: float) -> float:
    """numerator / denominator clipped to [0, 1], with 0 / 0 = 0."""
    if denominator <= 0.0:
        return 0.0
    return min(max(numerator / denominator, 0.0), 1.0)


def default_t_grid(tau: float, points: int = T_GRID_POINTS) -> np.ndarray:
    """Geometric thresholds from 1e-4 * tau to 12 * tau."""
    return np.geomspace(T_GRID_LOW * tau, T_GRID_HIGH * tau, points)


@dataclass(frozen=True)
class CurvePoint:
    t: float
    fdp: float
    tpp: float
    fdp_hat: float | None = None

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"threshold must be non-negative, got {self.t}")
        values = [self.fdp, self.tpp] + ([] if self.fdp_hat is None else [self.fdp_hat])
        if any(not 0.0 <= value <= 1.0 for value in values):
            raise ValueError(f"rates must lie in [0, 1], got {values}")


@dataclass(frozen=True)
class TradeoffCurve:
    """
    A sampled map t -> (fdp, tpp, fdp_hat) for one statistic.

    Attributes:
        statistic (Statistic): Statistic the curve belongs to
        lam (float | None): Lasso penalty, None for the Lasso-max statistics
        points (tuple): CurvePoints with strictly increasing t
    """

    statistic: Statistic
    lam: float | None
    points: tuple[CurvePoint, ...]

    def __post_init__(self):
        ts = [point.t for point in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("curve thresholds must be strictly increasing")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ts(self) -> np.ndarray:
        return np.array([point.t for point in self.points])

    @property
    def fdps(self) -> np.ndarray:
        return np.array([point.fdp for point in self.points])

    @property
    def tpps(self) -> np.ndarray:
        return np.array([point.tpp for point in self.points])

    @property
    def fdp_hats(self) -> np.ndarray:
        """Estimated FDP, NaN where the statistic has none."""
        return np.array([np.nan if p.fdp_hat is None else p.fdp_hat for p in self.points])


@dataclass(frozen=True)
class LcdTailProbs:
    """
    Tail probabilities of A - B with A = |eta_{alpha tau}(Pi + tau Z)| and
    B = |tau eta_alpha(Z')| independent.

    Attributes:
        p_ge (float): P(A - B >= t)
        p_le_neg (float): P(A - B <= -t)
        p_ge_null (float): P(A - B >= t | Pi = 0)
        p_le_neg_null (float): P(A - B <= -t | Pi = 0), equal to p_ge_null by symmetry
        p_ge_nonnull (float): P(A - B >= t | Pi != 0)
        p_le_neg_nonnull (float): P(A - B <= -t | Pi != 0)
        p_wrongsign_nonnull (float): P(A - B >= t, sgn(eta) != sgn(Pi) | Pi != 0)
    """

    p_ge: float
    p_le_neg: float
    p_ge_null: float
    p_le_neg_null: float
    p_ge_nonnull: float
    p_le_neg_nonnull: float
    p_wrongsign_nonnull: float


def knockoff_average(alpha: float, tau: float, func, lower: float = 0.0) -> float:
    """
    Integral of 2 phi(alpha + u) func(u) over u in [lower, 12].

    With B = tau * u this is the continuous part of E func(B / tau) for
    B = |tau eta_alpha(Z')|, whose density on b > 0 is (2 / tau) phi(alpha + b / tau).
    """
    if lower >= QUAD_LIMIT:
        return 0.0
    value, _ = quad(
        lambda u: 2.0 * normal_pdf(alpha + u) * func(u),
        lower,
        QUAD_LIMIT,
        epsabs=TAIL_EPSABS,
        epsrel=1e-10,
        limit=200,
    )
    return value


def lcd_tail_probs(prior: Prior, alpha: float, tau: float, t: float) -> LcdTailProbs:
    """
    Tail probabilities of the limiting LCD statistic at threshold t > 0.

    B is split into its atom at 0, of mass 1 - 2 Phi(-alpha), and its density part; given
    B, the tails of A are closed form, so each probability is a single quadrature.

    Args:
        prior (Prior): Prior of the original coefficients
        alpha (float): Model-X fixed point alpha
        tau (float): Model-X fixed point tau
        t (float): Threshold

    Returns:
        LcdTailProbs: Unconditional, null and nonnull tail probabilities
    """
    if t <= 0:
        raise ValueError(f"threshold must be positive, got {t}")
    b_atom = 1.0 - 2.0 * normal_cdf(-alpha)

    def ge(mu: float) -> float:
        head = b_atom * atom_exceed(mu, alpha, tau, t)
        return head + knockoff_average(
            alpha, tau, lambda u: atom_exceed(mu, alpha, tau, tau * u + t)
        )

    def le_neg(mu: float) -> float:
        # A <= B - t needs B >= t, so the atom of B never contributes
        return knockoff_average(
            alpha,
            tau,
            lambda u: 1.0 - atom_exceed(mu, alpha, tau, tau * u - t),
            lower=t / tau,
        )

    def wrong_sign(mu: float) -> float:
        shift = -abs(mu) / tau - alpha - t / tau
        head = b_atom * normal_cdf(shift)
        return head + knockoff_average(alpha, tau, lambda u: normal_cdf(shift - u))

    p_null = ge(0.0)
    epsilon = prior.epsilon
    ge_nonnull = le_nonnull = wrong_nonnull = 0.0
    for mu, mass in prior.nonnull_atoms:
        ge_nonnull += mass * ge(mu)
        le_nonnull += mass * le_neg(mu)
        wrong_nonnull += mass * wrong_sign(mu)

    zero_mass = prior.zero_mass
    return LcdTailProbs(
        p_ge=zero_mass * p_null + ge_nonnull,
        p_le_neg=zero_mass * p_null + le_nonnull,
        p_ge_null=p_null,
        p_le_neg_null=p_null,
        p_ge_nonnull=ge_nonnull / epsilon if epsilon else 0.0,
        p_le_neg_nonnull=le_nonnull / epsilon if epsilon else 0.0,
        p_wrongsign_nonnull=wrong_nonnull / epsilon if epsilon else 0.0,
    )


class CurveModel(ABC):
    """
    Limit of one selection statistic's FDP / TPP process.

    Attributes:
        prior (Prior): Prior of the original coefficients
        delta (float): n / p of the original design
        sigma (float): Noise level
        solution (SeSolution | None): Fixed point shared by every threshold, if any
    """

    statistic: Statistic
    solution: SeSolution | None = None

    def __init__(
        self,
        prior: Prior,
        delta: float,
        sigma: float,
        settings: SolverSettings = DEFAULT_SETTINGS,
    ):
        self.prior = prior
        self.delta = delta
        self.sigma = sigma
        self.settings = settings
        self._fdp_tables: dict[bool, np.ndarray] = {}

    @property
    def lam(self) -> float | None:
        return None if self.solution is None else self.solution.lam

    @property
    def has_estimate(self) -> bool:
        return False

    @abstractmethod
    def point(self, t: float) -> CurvePoint:
        """Limiting rates when selecting variables whose statistic is at least t."""

    @abstractmethod
    def default_grid(self) -> np.ndarray: ...

    @cached_property
    def grid(self) -> np.ndarray:
        return self.default_grid()

    def fdp(self, t: float, use_hat: bool = False) -> float:
        point = self.point(t)
        if not use_hat:
            return point.fdp
        if point.fdp_hat is None:
            raise ValueError(f"{self.statistic} has no FDP estimate")
        return point.fdp_hat

    def fdp_table(self, use_hat: bool = False) -> np.ndarray:
        """fdp (or fdp_hat) on ``grid``, computed once."""
        if use_hat not in self._fdp_tables:
            self._fdp_tables[use_hat] = np.array([self.fdp(t, use_hat) for t in self.grid])
        return self._fdp_tables[use_hat]

    def curve(self, t_grid=None) -> TradeoffCurve:
        ts = self.grid if t_grid is None else np.unique(np.asarray(t_grid, dtype=float))
        return TradeoffCurve(self.statistic, self.lam, tuple(self.point(t) for t in ts))


class LassoCoefModel(CurveModel):
    """Thresholded Lasso: select |beta_j(lambda)| >= t on the plain design."""

    statistic = Statistic.LASSO_COEF

    def __init__(self, prior, delta, sigma, lam, settings=DEFAULT_SETTINGS):
        super().__init__(prior, delta, sigma, settings)
        regime = Regime.original()
        self.solution = solve_state_evolution(prior, delta, sigma, lam, regime, settings)

    def default_grid(self) -> np.ndarray:
        return default_t_grid(self.solution.tau, self.settings.t_points)

    def point(self, t: float) -> CurvePoint:
        alpha, tau = self.solution.alpha, self.solution.tau
        split = exceed_prob_split(self.prior, alpha, tau, t)
        null = self.prior.zero_mass * split.null
        fdp = proportion(null, null + self.prior.epsilon * split.nonnull)
        return CurvePoint(t=t, fdp=fdp, tpp=min(split.nonnull, 1.0))


class LcdModel(CurveModel):
    """Knockoffs with the LCD statistic on the Model-X augmented design."""

    statistic = Statistic.LCD

    def __init__(self, prior, delta, sigma, lam, settings=DEFAULT_SETTINGS):
        super().__init__(prior, delta, sigma, settings)
        regime = Regime.model_x()
        self.solution = solve_state_evolution(prior, delta, sigma, lam, regime, settings)

    @property
    def has_estimate(self) -> bool:
        return True

    def default_grid(self) -> np.ndarray:
        return default_t_grid(self.solution.tau, self.settings.t_points)

    def tails(self, t: float) -> LcdTailProbs:
        return lcd_tail_probs(self.prior, self.solution.alpha, self.solution.tau, t)

    def point(self, t: float) -> CurvePoint:
        tails = self.tails(t)
        fdp = proportion(self.prior.zero_mass * tails.p_ge_null, tails.p_ge)
        fdp_hat = proportion(tails.p_le_neg, tails.p_ge)
        return CurvePoint(t=t, fdp=fdp, tpp=min(tails.p_ge_nonnull, 1.0), fdp_hat=fdp_hat)


class CountingModel(CurveModel):
    """Thresholded Lasso on the original columns with a shared pool of c * p fake columns."""

    statistic = Statistic.COUNTING_COEF

    def __init__(self, prior, delta, sigma, lam, ratio, settings=DEFAULT_SETTINGS):
        super().__init__(prior, delta, sigma, settings)
        self.ratio = ratio
        regime = Regime.counting(ratio)
        self.solution = solve_state_evolution(prior, delta, sigma, lam, regime, settings)

    @property
    def has_estimate(self) -> bool:
        return True

    def default_grid(self) -> np.ndarray:
        return default_t_grid(self.solution.tau, self.settings.t_points)

    def point(self, t: float) -> CurvePoint:
        alpha, tau = self.solution.alpha, self.solution.tau
        split = exceed_prob_split(self.prior, alpha, tau, t)
        null = self.prior.zero_mass * split.null
        selected = null + self.prior.epsilon * split.nonnull
        # a fake column exceeds t exactly as often as a null original does
        return CurvePoint(
            t=t,
            fdp=proportion(null, selected),
            tpp=min(split.nonnull, 1.0),
            fdp_hat=proportion(split.null, selected),
        )


class LassoMaxModel(CurveModel):
    """
    Lasso-max statistic: selecting T_j >= t is selecting the support of beta(t), so every
    threshold needs its own fixed point.
    """

    statistic = Statistic.LASSO_MAX

    @property
    def regime(self) -> Regime:
        return Regime.original()

    def default_grid(self) -> np.ndarray:
        low, high = achievable_lambdas(
            self.prior, self.delta, self.sigma, self.regime, self.settings
        )
        return np.geomspace(low, high, LM_GRID_POINTS + 2)[1:-1]

    def solve(self, t: float) -> SeSolution:
        return solve_state_evolution(
            self.prior, self.delta, self.sigma, t, self.regime, self.settings
        )

    def point(self, t: float) -> CurvePoint:
        solution = self.solve(t)
        split = exceed_prob_split(self.prior, solution.alpha, solution.tau, 0.0)
        null = self.prior.zero_mass * split.null
        fdp = proportion(null, null + self.prior.epsilon * split.nonnull)
        return CurvePoint(t=t, fdp=fdp, tpp=min(split.nonnull, 1.0))


class CountingLassoMaxModel(LassoMaxModel):
    """Lasso-max on the original columns of the counting-knockoff design."""

    statistic = Statistic.LASSO_MAX

    def __init__(self, prior, delta, sigma, ratio, settings=DEFAULT_SETTINGS):
        super().__init__(prior, delta, sigma, settings)
        self.ratio = ratio

    @property
    def regime(self) -> Regime:
        return Regime.counting(self.ratio)

    @property
    def has_estimate(self) -> bool:
        return True

    def point(self, t: float) -> CurvePoint:
        solution = self.solve(t)
        split = exceed_prob_split(self.prior, solution.alpha, solution.tau, 0.0)
        null = self.prior.zero_mass * split.null
        selected = null + self.prior.epsilon * split.nonnull
        return CurvePoint(
            t=t,
            fdp=proportion(null, selected),
            tpp=min(split.nonnull, 1.0),
            fdp_hat=proportion(split.null, selected),
        )


def lc_curve(prior, delta, sigma, lam, t_grid=None, settings=DEFAULT_SETTINGS) -> TradeoffCurve:
    return LassoCoefModel(prior, delta, sigma, lam, settings).curve(t_grid)


def lm_point(prior, delta, sigma, t, settings=DEFAULT_SETTINGS) -> CurvePoint:
    return LassoMaxModel(prior, delta, sigma, settings).point(t)


def lcd_curve(prior, delta, sigma, lam, t_grid=None, settings=DEFAULT_SETTINGS) -> TradeoffCurve:
    return LcdModel(prior, delta, sigma, lam, settings).curve(t_grid)


def counting_curve(
    prior, delta, sigma, lam, ratio, t_grid=None, settings=DEFAULT_SETTINGS
) -> TradeoffCurve:
    return CountingModel(prior, delta, sigma, lam, ratio, settings).curve(t_grid)


def counting_lm_point(prior, delta, sigma, ratio, t, settings=DEFAULT_SETTINGS) -> CurvePoint:
    return CountingLassoMaxModel(prior, delta, sigma, ratio, settings).point(t)


def invert_fdp(model: CurveModel, q: float, use_hat: bool = False) -> float:
    """
    Smallest threshold at which the limiting fdp (or fdp_hat) drops to q.

    The fdp is sampled on the model's grid; the first grid point at or below q and its left
    neighbour bracket the crossing, which Brent's method then refines.

    Args:
        model (CurveModel): Curve source
        q (float): Target level in (0, 1]
        use_hat (bool): Invert the estimated FDP instead of the true one

    Returns:
        float: The threshold, or ZERO_PLUS when fdp <= q already as t -> 0+

    Raises:
        NotAchievable: fdp stays above q on the whole grid
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    grid = model.grid
    values = model.fdp_table(use_hat)

    rises = np.diff(values)
    if rises.size and rises.max() > MONOTONE_TOL:
        at = int(np.argmax(rises))
        warnings.warn(
            f"{Message.NON_MONOTONE}: +{rises[at]:.3g} at t={grid[at + 1]:.6g}",
            NonMonotoneWarning,
            stacklevel=2,
        )

    if q >= 1.0 or values[0] <= q:
        return ZERO_PLUS

    below = np.flatnonzero(values <= q)
    if below.size == 0:
        raise NotAchievable(f"q={q} but fdp >= {values.min():.4g} on the grid")

    i = below[0]
    if values[i] == q:
        return float(grid[i])
    t = brentq(lambda x: model.fdp(x, use_hat) - q, grid[i - 1], grid[i], xtol=1e-12)
    logger.debug("%s: fdp%s = %.4g at t = %.8g", model.statistic, "_hat" * use_hat, q, t)
    return float(t)


def power_at_level(model: CurveModel, q: float, use_hat: bool = False) -> float:
    """Limiting tpp at the threshold where fdp (or fdp_hat) reaches q; 0 if it never does."""
    try:
        t = invert_fdp(model, q, use_hat)
    except NotAchievable:
        return 0.0
    if t == ZERO_PLUS:
        t = float(model.grid[0])
    return model.point(t).tpp


def lm_fdp_at_tpp(prior, delta, sigma, tpp, settings=DEFAULT_SETTINGS) -> CurvePoint:
    """Lasso-max point whose tpp equals ``tpp``, found along the lambda grid."""
    model = LassoMaxModel(prior, delta, sigma, settings)
    tpps = np.array([model.point(t).tpp for t in model.grid])
    above = np.flatnonzero(tpps >= tpp)
    if above.size == 0 or above[-1] == tpps.size - 1:
        raise NotAchievable(f"tpp={tpp} outside [{tpps.min():.4g}, {tpps.max():.4g}]")

    i = above[-1]
    t = brentq(lambda x: model.point(x).tpp - tpp, model.grid[i], model.grid[i + 1], xtol=1e-12)
    return model.point(t)


def sign_limits(prior, delta, sigma, lam, t, settings=DEFAULT_SETTINGS) -> tuple[float, float]:
    """
    Limiting false sign proportion and true sign proportion of the LCD knockoff selection.

    FSP is half the LCD fdp. TSP is

        eps P(A* - B >= t) - eps P(A* - B >= t, eta(Pi* + tau Z) < 0) + (1 - eps) tpp / 2

    with A* the nonnull version of A, used as written.

    Raises:
        SignedPriorRequired: Some nonzero atom is negative
    """
    if not prior.is_positive():
        raise SignedPriorRequired(f"atoms {prior.nonnull_atoms}")

    model = LcdModel(prior, delta, sigma, lam, settings)
    point = model.point(t)
    tails = model.tails(t)
    epsilon = prior.epsilon

    fsp = 0.5 * point.fdp
    tsp = (
        epsilon * tails.p_ge_nonnull
        - epsilon * tails.p_wrongsign_nonnull
        + 0.5 * (1.0 - epsilon) * point.tpp
    )
    return fsp, tsp

