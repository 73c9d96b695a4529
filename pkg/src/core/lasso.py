import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..utils.constants import CD_MAX_SWEEPS, CD_TOL, KKT_RTOL, PATH_POINTS, PATH_RATIO
from ..utils.errors import DimensionMismatch, NonConvergence
from ..utils.rng import make_rng
from .prior import Prior

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """
    Gaussian design with i.i.d. N(0, 1/n) entries, so columns have squared norm near 1.

    Attributes:
        entries (np.ndarray): n x m matrix, column-major and read-only
        seed (int | None): Seed it was drawn from; None for stacked designs
    """

    entries: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        entries = np.asfortranarray(self.entries, dtype=float)
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    def column_norms_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.entries, self.entries)

    def hstack(self, other: "DesignMatrix") -> "DesignMatrix":
        if other.n != self.n:
            raise DimensionMismatch(f"{self.n} rows vs {other.n} rows")
        return DesignMatrix(np.hstack([self.entries, other.entries]))

    def rows(self, index) -> np.ndarray:
        return self.entries[index]


@dataclass(frozen=True, eq=False)
class SignalVector:
    """True coefficient vector; ``support`` holds the indices of its nonzero entries."""

    values: np.ndarray
    support: np.ndarray = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support", np.flatnonzero(values))

    @property
    def p(self) -> int:
        return self.values.size

    def is_nonnull(self) -> np.ndarray:
        return self.values != 0.0


@dataclass(frozen=True, eq=False)
class LassoFit:
    """
    Lasso estimate at one penalty.

    Attributes:
        coefficients (np.ndarray): Estimate, one entry per design column
        lam (float): Penalty
        objective (float): 0.5 * ||Y - X b||^2 + lam * ||b||_1 at the estimate
        kkt_violation (float): Largest violation of the optimality conditions
        sweeps (int): Coordinate-descent sweeps used
        history (tuple): Objective after every sweep, starting from the initial point
    """

    coefficients: np.ndarray
    lam: float
    objective: float
    kkt_violation: float
    sweeps: int = 0
    history: tuple[float, ...] = ()

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)


def as_array(X) -> np.ndarray:
    return X.entries if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)


def generate_design(n: int, m: int, seed: int) -> DesignMatrix:
    if n < 1 or m < 1:
        raise ValueError(f"design needs n, m >= 1, got {n} x {m}")
    rng = make_rng(seed)
    return DesignMatrix(rng.standard_normal((n, m)) / math.sqrt(n), seed=seed)


def sample_signal(prior: Prior, p: int, seed: int) -> SignalVector:
    """Draw p coefficients independently from the prior's atoms."""
    rng = make_rng(seed)
    return SignalVector(rng.choice(prior.values(), size=p, p=prior.masses()))


def simulate_response(X, beta, sigma: float, seed: int) -> np.ndarray:
    """Y = X beta + xi with xi i.i.d. N(0, sigma^2)."""
    entries = as_array(X)
    values = beta.values if isinstance(beta, SignalVector) else np.asarray(beta, dtype=float)
    if entries.shape[1] != values.size:
        raise DimensionMismatch(f"{entries.shape[1]} columns vs {values.size} coefficients")
    noise = make_rng(seed).standard_normal(entries.shape[0])
    return entries @ values + sigma * noise


def soft(value: float, threshold: float) -> float:
    return math.copysign(max(abs(value) - threshold, 0.0), value)


def lasso_objective(X, Y, beta: np.ndarray, lam: float) -> float:
    residual = Y - as_array(X) @ beta
    return 0.5 * float(residual @ residual) + lam * float(np.abs(beta).sum())


def kkt_violation(X, Y, beta: np.ndarray, lam: float) -> float:
    """
    Largest violation of the Lasso optimality conditions.

    On the support X_j'(Y - X b) must equal lam * sgn(b_j); off it |X_j'(Y - X b)| <= lam.
    """
    gradient = as_array(X).T @ (Y - as_array(X) @ beta)
    active = beta != 0.0
    on_support = np.abs(gradient[active] - lam * np.sign(beta[active]))
    off_support = np.maximum(np.abs(gradient[~active]) - lam, 0.0)
    return float(max(on_support.max(initial=0.0), off_support.max(initial=0.0)))


def coordinate_sweep(
    X: np.ndarray,
    col_sq: np.ndarray,
    residual: np.ndarray,
    beta: np.ndarray,
    lam: float,
    indices,
) -> float:
    """One cyclic pass over ``indices``, updating beta and residual in place."""
    biggest = 0.0
    for j in indices:
        if col_sq[j] == 0.0:
            continue
        old = beta[j]
        column = X[:, j]
        updated = soft(float(column @ residual) + col_sq[j] * old, lam) / col_sq[j]
        if updated != old:
            residual -= (updated - old) * column
            beta[j] = updated
            biggest = max(biggest, abs(updated - old))
    return biggest


def lasso_solve(
    X,
    Y,
    lam: float,
    warm_start: np.ndarray | None = None,
    tol: float = CD_TOL,
    max_sweeps: int = CD_MAX_SWEEPS,
) -> LassoFit:
    """
    Minimise 0.5 * ||Y - X b||^2 + lam * ||b||_1 by cyclic coordinate descent.

    The penalty is not scaled by n. After a full sweep, passes run over the current support
    only; once those settle, a full sweep re-checks every column, and the fit is returned
    only when the coefficient change is below ``tol`` and the KKT conditions hold to
    1e-6 * max(1, ||X'Y||_inf).

    Args:
        X: Design, a DesignMatrix or an n x m array
        Y (np.ndarray): Response of length n
        lam (float): Penalty
        warm_start (np.ndarray | None): Starting coefficients
        tol (float): Coefficient-change stopping tolerance
        max_sweeps (int): Sweep cap

    Returns:
        LassoFit: The certified fit

    Raises:
        NonConvergence: The sweep cap was reached
    """
    entries = np.asfortranarray(as_array(X))
    Y = np.asarray(Y, dtype=float)
    n, m = entries.shape
    if Y.shape != (n,):
        raise DimensionMismatch(f"{n} rows vs response of shape {Y.shape}")
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")

    correlations = entries.T @ Y
    kkt_tol = KKT_RTOL * max(1.0, float(np.abs(correlations).max(initial=0.0)))

    if warm_start is None and lam >= np.abs(correlations).max(initial=0.0):
        objective = 0.5 * float(Y @ Y)
        return LassoFit(np.zeros(m), lam, objective, 0.0, 0, (objective,))

    beta = np.zeros(m) if warm_start is None else np.array(warm_start, dtype=float)
    if beta.shape != (m,):
        raise DimensionMismatch(f"{m} columns vs warm start of shape {beta.shape}")

    col_sq = np.einsum("ij,ij->j", entries, entries)
    residual = Y - entries @ beta
    history = [0.5 * float(residual @ residual) + lam * float(np.abs(beta).sum())]
    everything = range(m)
    indices = everything
    sweeps = 0

    while sweeps < max_sweeps:
        change = coordinate_sweep(entries, col_sq, residual, beta, lam, indices)
        sweeps += 1
        history.append(0.5 * float(residual @ residual) + lam * float(np.abs(beta).sum()))

        if change > tol:
            indices = np.flatnonzero(beta)
            continue
        if indices is not everything:
            indices = everything
            continue

        violation = kkt_violation(entries, Y, beta, lam)
        if violation <= kkt_tol:
            logger.debug("lasso lam=%.6g: %d sweeps, %d nonzero", lam, sweeps, (beta != 0).sum())
            return LassoFit(beta, lam, history[-1], violation, sweeps, tuple(history))
        # small steps but not optimal yet: keep sweeping everything with a tighter rule
        tol /= 10.0

    raise NonConvergence(f"coordinate descent at lam={lam:.6g} after {max_sweeps} sweeps")


def geometric_lambda_grid(
    X, Y, points: int = PATH_POINTS, ratio: float = PATH_RATIO
) -> np.ndarray:
    """Descending grid from ||X'Y||_inf down to ratio * ||X'Y||_inf."""
    top = float(np.abs(as_array(X).T @ np.asarray(Y, dtype=float)).max())
    return np.geomspace(top, ratio * top, points)


def lasso_path(X, Y, lambdas, tol: float = CD_TOL) -> list[LassoFit]:
    """Warm-started fits along a strictly decreasing grid of positive penalties."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size == 0 or (lambdas <= 0).any() or (np.diff(lambdas) >= 0).any():
        raise ValueError("lambda grid must be positive and strictly decreasing")

    fits = []
    previous = None
    for lam in lambdas:
        fit = lasso_solve(X, Y, float(lam), warm_start=previous, tol=tol)
        fits.append(fit)
        previous = fit.coefficients if fit.coefficients.any() else None
    return fits


def lasso_max_stat(path: list[LassoFit]) -> np.ndarray:
    """
    T_j = largest grid penalty at which coefficient j is nonzero, 0 if it never enters.

    ``path`` must run over a decreasing grid.
    """
    coefficients = np.vstack([fit.coefficients for fit in path])
    lams = np.array([fit.lam for fit in path])
    entered = coefficients != 0.0
    first = entered.argmax(axis=0)
    return np.where(entered.any(axis=0), lams[first], 0.0)
