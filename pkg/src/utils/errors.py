from .constants import EXIT_NO_SOLUTION, EXIT_NON_CONVERGENCE, Message


class LassoKnockoffsError(Exception):
    """Base class for every error raised by this package."""

    exit_code: int = 1
    message: Message = Message.BAD_CONFIG

    def __init__(self, detail: str | None = None):
        text = str(self.message) if detail is None else f"{self.message}: {detail}"
        super().__init__(text)


class NoSolution(LassoKnockoffsError):
    exit_code = EXIT_NO_SOLUTION
    message = Message.NO_SOLUTION


class AmbiguousSolution(NoSolution):
    message = Message.AMBIGUOUS


class NonConvergence(LassoKnockoffsError):
    exit_code = EXIT_NON_CONVERGENCE
    message = Message.NON_CONVERGENCE


class NotAchievable(LassoKnockoffsError):
    message = Message.NOT_ACHIEVABLE


class SignedPriorRequired(LassoKnockoffsError):
    message = Message.SIGNED_PRIOR


class DimensionMismatch(LassoKnockoffsError):
    message = Message.DIMENSION_MISMATCH


class UnknownFigure(LassoKnockoffsError):
    message = Message.UNKNOWN_FIGURE


class ConfigError(LassoKnockoffsError):
    message = Message.BAD_CONFIG


class NonMonotoneWarning(UserWarning):
    pass
