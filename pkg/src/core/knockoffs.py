import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..utils.constants import RegimeKind
from ..utils.errors import DimensionMismatch
from .lasso import DesignMatrix, LassoFit, SignalVector, generate_design
from .prior import Regime

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AugmentedDesign:
    """
    Original design with fake null columns appended.

    Attributes:
        base (DesignMatrix): n x p original design
        fakes (DesignMatrix): n x r fake columns, drawn independently of everything else
        kind (RegimeKind): MODEL_X (r = p, one knockoff per column) or COUNTING (shared pool)
    """

    base: DesignMatrix
    fakes: DesignMatrix
    kind: RegimeKind

    @property
    def p(self) -> int:
        return self.base.m

    @property
    def r(self) -> int:
        return self.fakes.m

    @cached_property
    def combined(self) -> DesignMatrix:
        return self.base.hstack(self.fakes)


@dataclass(frozen=True, eq=False)
class WStats:
    """LCD statistics W_j = |b_j| - |b_{p+j}| from one fit on the augmented design."""

    values: np.ndarray
    lam: float


@dataclass(frozen=True, eq=False)
class Selection:
    """
    Selected variables.

    Attributes:
        indices (np.ndarray): Selected column indices, ascending
        threshold (float): Threshold used; inf when nothing qualifies
        level_q (float): Target level the threshold was calibrated to
    """

    indices: np.ndarray
    threshold: float
    level_q: float

    def __len__(self) -> int:
        return self.indices.size


@dataclass(frozen=True, eq=False)
class EmpiricalPath:
    """Realised FDP(t) and TPP(t) at every observed positive statistic value."""

    ts: np.ndarray
    fdp: np.ndarray
    tpp: np.ndarray


def augment(base: DesignMatrix, regime: Regime, seed: int) -> AugmentedDesign:
    """
    Append i.i.d. N(0, 1/n) fake columns: p of them for Model-X knockoffs and
    round(c * p) for counting knockoffs with ratio c.
    """
    match regime.kind:
        case RegimeKind.MODEL_X:
            r = base.m
        case RegimeKind.COUNTING:
            r = round(regime.ratio * base.m)
        case _:
            raise ValueError(f"cannot augment a design for regime {regime.kind}")
    if r < 1:
        raise ValueError(f"counting ratio {regime.ratio} leaves no fake columns for p={base.m}")
    return AugmentedDesign(base=base, fakes=generate_design(base.n, r, seed), kind=regime.kind)


def lcd_stats(fit: LassoFit, p: int) -> WStats:
    coefficients = fit.coefficients
    if coefficients.size != 2 * p:
        raise DimensionMismatch(f"expected {2 * p} coefficients, got {coefficients.size}")
    return WStats(np.abs(coefficients[:p]) - np.abs(coefficients[p:]), fit.lam)


def knockoff_threshold(W: WStats, q: float) -> Selection:
    """
    Knockoff filter: t = min{t > 0 : (1 + #{W_j <= -t}) / #{W_j >= t} <= q}.

    Candidates are the distinct positive |W_j|; the ratio is infinite where no W_j >= t.
    When no candidate qualifies the threshold is inf and nothing is selected.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    values = np.asarray(W.values, dtype=float)
    magnitudes = np.abs(values)
    candidates = np.unique(magnitudes[magnitudes > 0])

    ordered = np.sort(values)
    negatives = np.searchsorted(ordered, -candidates, side="right")
    positives = ordered.size - np.searchsorted(ordered, candidates, side="left")
    ratios = np.where(positives > 0, (1.0 + negatives) / np.maximum(positives, 1), np.inf)

    passing = np.flatnonzero(ratios <= q)
    if passing.size == 0:
        return Selection(np.array([], dtype=int), math.inf, q)
    threshold = float(candidates[passing[0]])
    return Selection(np.flatnonzero(values >= threshold), threshold, q)


def counting_threshold(fit, p: int, r: int, q: float) -> Selection:
    """
    Counting-knockoff threshold.

    With statistics s (|b_j| of a fit on the p + r column design, or any p + r statistics)

        t = inf{t : [#{fake j : s_j > t} / (r + 1)] / [#{original j : s_j > t} / p] <= q}

    evaluated at the distinct original-column values; originals with s_j > t are selected.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    values = np.abs(fit.coefficients) if isinstance(fit, LassoFit) else np.asarray(fit)
    if values.size != p + r:
        raise DimensionMismatch(f"expected {p + r} statistics, got {values.size}")

    originals, fakes = values[:p], np.sort(values[p:])
    candidates = np.unique(originals)
    ordered = np.sort(originals)
    above_original = p - np.searchsorted(ordered, candidates, side="right")
    above_fake = r - np.searchsorted(fakes, candidates, side="right")

    estimate = np.full(candidates.shape, np.inf)
    hit = above_original > 0
    estimate[hit] = (above_fake[hit] / (r + 1)) / (above_original[hit] / p)

    passing = np.flatnonzero(estimate <= q)
    if passing.size == 0:
        return Selection(np.array([], dtype=int), math.inf, q)
    threshold = float(candidates[passing[0]])
    return Selection(np.flatnonzero(originals > threshold), threshold, q)


def empirical_rates(selection, truth: SignalVector) -> tuple[float, float]:
    """Realised (FDP, TPP) of a selection, with 0 / 0 = 0."""
    indices = selection.indices if isinstance(selection, Selection) else np.asarray(selection)
    nonnull = truth.is_nonnull()
    true_hits = int(nonnull[indices].sum()) if indices.size else 0
    false_hits = indices.size - true_hits
    fdp = false_hits / indices.size if indices.size else 0.0
    tpp = true_hits / truth.support.size if truth.support.size else 0.0
    return fdp, tpp


def _selection_counts(statistic: np.ndarray, nonnull: np.ndarray, ts: np.ndarray):
    """For each t: (#{stat >= t}, #{null with stat >= t})."""
    order = np.argsort(statistic, kind="stable")
    ordered = statistic[order]
    null_suffix = np.append(np.cumsum((~nonnull[order])[::-1])[::-1], 0)
    start = np.searchsorted(ordered, ts, side="left")
    return ordered.size - start, null_suffix[start]


def empirical_tradeoff(statistic, truth: SignalVector) -> EmpiricalPath:
    """FDP(t) and TPP(t) of the selection {j : statistic_j >= t} at every observed t > 0."""
    statistic = np.asarray(statistic, dtype=float)
    if statistic.size != truth.p:
        raise DimensionMismatch(f"{statistic.size} statistics vs p={truth.p}")
    ts = np.unique(statistic[statistic > 0])
    selected, false_hits = _selection_counts(statistic, truth.is_nonnull(), ts)
    support = max(truth.support.size, 1)
    return EmpiricalPath(
        ts=ts,
        fdp=false_hits / np.maximum(selected, 1),
        tpp=(selected - false_hits) / support,
    )


def rates_on_grid(statistic, truth: SignalVector, t_grid) -> tuple[np.ndarray, ...]:
    """
    The same process read off at arbitrary thresholds.

    Returns:
        tuple: (fdp, tpp, number selected), one entry per grid point
    """
    statistic = np.asarray(statistic, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    selected, false_hits = _selection_counts(statistic, truth.is_nonnull(), t_grid)
    support = max(truth.support.size, 1)
    fdp = np.where(selected > 0, false_hits / np.maximum(selected, 1), 0.0)
    return fdp, (selected - false_hits) / support, selected


def oracle_selection(statistic, truth: SignalVector, q: float) -> Selection:
    """Largest selection {statistic >= t} whose true FDP is at most q (uses the truth)."""
    statistic = np.asarray(statistic, dtype=float)
    path = empirical_tradeoff(statistic, truth)
    passing = np.flatnonzero(path.fdp <= q)
    if passing.size == 0:
        return Selection(np.array([], dtype=int), math.inf, q)
    threshold = float(path.ts[passing[0]])
    return Selection(np.flatnonzero(statistic >= threshold), threshold, q)
