"""CSV emission. Floats carry 12 significant digits and missing values are left empty."""

import logging
import math
from pathlib import Path

import pandas as pd

from ..core.theory import TradeoffCurve
from ..utils.constants import CSV_DIGITS
from .experiment import TrialRecord

logger = logging.getLogger(__name__)

FLOAT_FORMAT = f"%.{CSV_DIGITS}g"
CURVE_COLUMNS = ["statistic", "lambda", "t", "fdp", "tpp", "fdp_hat"]
PATH_COLUMNS = ["trial", "t", "fdp", "tpp"]
SELECTION_COLUMNS = ["trial", "lambda", "cv_lambda", "q", "threshold", "selected", "fdp", "tpp"]


def _number(value) -> float:
    return math.nan if value is None else float(value)


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path


def curves_frame(curves: list[TradeoffCurve]) -> pd.DataFrame:
    rows = [
        {
            "statistic": str(curve.statistic),
            "lambda": _number(curve.lam),
            "t": point.t,
            "fdp": point.fdp,
            "tpp": point.tpp,
            "fdp_hat": _number(point.fdp_hat),
        }
        for curve in curves
        for point in curve.points
    ]
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def write_curves_csv(curves: list[TradeoffCurve], path: str | Path) -> Path:
    """One row per curve point: statistic,lambda,t,fdp,tpp,fdp_hat."""
    return write_frame(curves_frame(curves), path)


def paths_frame(records: list[TrialRecord]) -> pd.DataFrame:
    frames = [
        pd.DataFrame(
            {
                "trial": record.trial_id,
                "t": record.path.ts,
                "fdp": record.path.fdp,
                "tpp": record.path.tpp,
            }
        )
        for record in records
    ]
    if not frames:
        return pd.DataFrame(columns=PATH_COLUMNS)
    return pd.concat(frames, ignore_index=True)[PATH_COLUMNS]


def write_trial_paths(records: list[TrialRecord], path: str | Path) -> Path:
    """Empirical FDP(t) / TPP(t) of every trial: trial,t,fdp,tpp."""
    return write_frame(paths_frame(records), path)


def selections_frame(records: list[TrialRecord]) -> pd.DataFrame:
    rows = [
        {
            "trial": record.trial_id,
            "lambda": record.lambda_used,
            "cv_lambda": _number(record.cv_lambda),
            "q": outcome.q,
            "threshold": outcome.threshold,
            "selected": outcome.selected,
            "fdp": outcome.fdp,
            "tpp": outcome.tpp,
        }
        for record in records
        for outcome in record.outcomes
    ]
    return pd.DataFrame(rows, columns=SELECTION_COLUMNS)


def write_selections(records: list[TrialRecord], path: str | Path) -> Path:
    """Per-trial, per-q selection outcomes."""
    return write_frame(selections_frame(records), path)
