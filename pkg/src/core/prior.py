import math
from dataclasses import dataclass, field

import numpy as np

from ..utils.constants import RegimeKind

MASS_TOL = 1e-12


@dataclass(frozen=True)
class Prior:
    """
    Discrete mixture prior on the regression coefficients.

    Attributes:
        atoms (tuple): (value, mass) pairs; exactly one atom sits at 0
        allow_null (bool): Accept a zero atom of full mass (degenerate, test use only)
    """

    atoms: tuple[tuple[float, float], ...]
    allow_null: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple((float(value), float(mass)) for value, mass in self.atoms)
        object.__setattr__(self, "atoms", atoms)

        if abs(sum(mass for _, mass in atoms) - 1.0) > MASS_TOL:
            raise ValueError("atom masses must sum to 1")
        if any(not 0 < mass <= 1 for _, mass in atoms):
            raise ValueError("atom masses must lie in (0, 1]")
        if any(not math.isfinite(value) for value, _ in atoms):
            raise ValueError("atom values must be finite")

        zero_atoms = [mass for value, mass in atoms if value == 0.0]
        if len(zero_atoms) != 1:
            raise ValueError("exactly one atom must sit at 0")
        if zero_atoms[0] >= 1.0 and not self.allow_null:
            raise ValueError("the zero atom must carry mass below 1")

    @classmethod
    def two_point(cls, epsilon: float, magnitude: float) -> "Prior":
        """(1 - epsilon) * delta_0 + epsilon * delta_magnitude."""
        return cls(((0.0, 1.0 - epsilon), (magnitude, epsilon)))

    @classmethod
    def null(cls) -> "Prior":
        return cls(((0.0, 1.0),), allow_null=True)

    @property
    def epsilon(self) -> float:
        """Probability of a nonzero coefficient."""
        return sum(mass for value, mass in self.atoms if value != 0.0)

    @property
    def zero_mass(self) -> float:
        return next(mass for value, mass in self.atoms if value == 0.0)

    @property
    def nonnull_atoms(self) -> tuple[tuple[float, float], ...]:
        return tuple((value, mass) for value, mass in self.atoms if value != 0.0)

    def second_moment(self) -> float:
        return sum(mass * value**2 for value, mass in self.atoms)

    def is_positive(self) -> bool:
        return all(value > 0 for value, _ in self.nonnull_atoms)

    def dilute(self, factor: float) -> "Prior":
        """
        Scale every nonzero mass by ``factor`` and move the remainder onto the zero atom.

        Args:
            factor (float): Scaling in (0, 1]

        Returns:
            Prior: The diluted prior
        """
        scaled = [(value, mass * factor) for value, mass in self.nonnull_atoms]
        zero = 1.0 - sum(mass for _, mass in scaled)
        return Prior(((0.0, zero), *scaled), allow_null=self.allow_null)

    def values(self) -> np.ndarray:
        return np.array([value for value, _ in self.atoms])

    def masses(self) -> np.ndarray:
        return np.array([mass for _, mass in self.atoms])


@dataclass(frozen=True)
class Regime:
    """
    Design on which the Lasso is fit.

    Attributes:
        kind (RegimeKind): Original, ModelX, Counting or Cv
        ratio (float | None): Counting ratio c = r / p
        folds (int | None): Fold count K of cross-validation on the Model-X design
    """

    kind: RegimeKind
    ratio: float | None = None
    folds: int | None = None

    def __post_init__(self):
        if self.kind == RegimeKind.COUNTING:
            if self.ratio is None or not (0 < self.ratio < math.inf):
                raise ValueError("counting ratio must be positive and finite")
        if self.kind == RegimeKind.CV:
            if self.folds is None or self.folds < 2:
                raise ValueError("cross-validation needs at least 2 folds")

    @classmethod
    def original(cls) -> "Regime":
        return cls(RegimeKind.ORIGINAL)

    @classmethod
    def model_x(cls) -> "Regime":
        return cls(RegimeKind.MODEL_X)

    @classmethod
    def counting(cls, ratio: float) -> "Regime":
        return cls(RegimeKind.COUNTING, ratio=ratio)

    @classmethod
    def cv(cls, folds: int) -> "Regime":
        return cls(RegimeKind.CV, folds=folds)

    def fake_columns_per_original(self) -> float:
        """Fake columns added per original column (0 for the plain design)."""
        match self.kind:
            case RegimeKind.ORIGINAL:
                return 0.0
            case RegimeKind.COUNTING:
                return float(self.ratio)
            case _:
                return 1.0


def effective_problem(prior: Prior, delta: float, regime: Regime) -> tuple[Prior, float]:
    """
    Reduce an augmented-design problem to an equivalent problem on a plain design.

    Adding r = c * p independent null columns leaves n rows over p (1 + c) columns, so the
    nonzero fraction and the sampling ratio are both divided by (1 + c). Model-X is the
    case c = 1; cross-validation additionally trains on (K - 1) / K of the rows.

    Args:
        prior (Prior): Prior of the original coefficients
        delta (float): n / p of the original design
        regime (Regime): Design the Lasso is fit on

    Returns:
        tuple: (effective prior, effective delta)
    """
    if regime.kind == RegimeKind.ORIGINAL:
        return prior, delta

    if regime.kind == RegimeKind.CV:
        delta = delta * (regime.folds - 1) / regime.folds

    scale = 1.0 + regime.fake_columns_per_original()
    return prior.dilute(1.0 / scale), delta / scale
