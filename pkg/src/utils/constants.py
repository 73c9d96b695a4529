from enum import IntEnum, StrEnum


class RegimeKind(StrEnum):
    ORIGINAL = "original"
    MODEL_X = "model_x"
    COUNTING = "counting"
    CV = "cv"


class Statistic(StrEnum):
    LASSO_MAX = "lasso_max"
    LASSO_COEF = "lasso_coef"
    LCD = "lcd"
    COUNTING_COEF = "counting_coef"

    @classmethod
    def augmented(cls) -> list["Statistic"]:
        return [cls.LCD, cls.COUNTING_COEF]


class LambdaRule(StrEnum):
    FIXED = "fixed"
    CV = "cv"
    ORACLE = "oracle"


class Stream(IntEnum):
    """Per-trial random streams, used as the last spawn key of a trial seed."""

    DESIGN = 0
    SIGNAL = 1
    NOISE = 2
    KNOCKOFF = 3
    FOLDS = 4
    CONTRAST = 5


class Message(StrEnum):
    NO_SOLUTION = "No state-evolution solution for the requested lambda"
    AMBIGUOUS = "Multiple sign changes in the alpha scan"
    NON_CONVERGENCE = "Iteration did not converge"
    NOT_ACHIEVABLE = "Requested FDP level is below the curve's infimum"
    SIGNED_PRIOR = "Sign limits require all nonzero atoms to be positive"
    DIMENSION_MISMATCH = "Dimensions do not agree"
    UNKNOWN_FIGURE = "Unknown figure id"
    NON_MONOTONE = "Sampled fdp curve is not monotone"
    BAD_CONFIG = "Invalid configuration"
    SUCCESS = "Success"


# Gaussian quadrature
QUAD_LIMIT = 12.0
QUAD_EPSABS = 1e-10
TAIL_EPSABS = 1e-14

# State evolution
ALPHA_MAX = 50.0
ALPHA_OFFSET = 1e-8
ALPHA_SCAN_POINTS = 200
ALPHA0_BRACKET = (-20.0, 20.0)
ALPHA0_TOL = 1e-10
TAU_DAMPING = 0.5
TAU_TOL = 1e-10
TAU_MAX_ITER = 10_000
RESIDUAL_TOL = 1e-6

# Curves and tuning
T_GRID_POINTS = 400
T_GRID_LOW = 1e-4
T_GRID_HIGH = 12.0
LM_GRID_POINTS = 60
MONOTONE_TOL = 1e-9
LAMBDA_BOUNDS = (0.01, 4.0)
LAMBDA_GRID_POINTS = 50
STAR_XATOL = 1e-4
CV_FOLDS = 10

# Lasso
CD_TOL = 1e-10
CD_MAX_SWEEPS = 100_000
KKT_RTOL = 1e-6
PATH_POINTS = 100
PATH_RATIO = 1e-3

# Harness
THREADS_ENV = "LASSOKO_THREADS"
CSV_DIGITS = 12
MIN_SELECTED = 50
EXIT_NO_SOLUTION = 2
EXIT_NON_CONVERGENCE = 3
