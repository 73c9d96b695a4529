from dataclasses import dataclass, replace
from pathlib import Path

from .constants import (
    ALPHA_MAX,
    ALPHA_OFFSET,
    ALPHA_SCAN_POINTS,
    RESIDUAL_TOL,
    T_GRID_POINTS,
    TAU_DAMPING,
    TAU_MAX_ITER,
    TAU_TOL,
)
from .errors import ConfigError


@dataclass(frozen=True)
class SolverSettings:
    """
    Numerical knobs of the state-evolution solvers.

    Attributes:
        alpha_max (float): Upper end of the alpha search interval
        alpha_offset (float): Gap kept above max(alpha_0, 0) at the lower end
        scan_points (int): Log-spaced alpha values scanned for sign changes
        damping (float): Weight of the new value in the damped tau^2 update
        tau_tol (float): Stop the inner iteration once |delta tau| is below this
        max_iter (int): Cap on inner iterations
        residual_tol (float): Largest accepted violation of the solved equations
        t_points (int): Default size of threshold grids
    """

    alpha_max: float = ALPHA_MAX
    alpha_offset: float = ALPHA_OFFSET
    scan_points: int = ALPHA_SCAN_POINTS
    damping: float = TAU_DAMPING
    tau_tol: float = TAU_TOL
    max_iter: int = TAU_MAX_ITER
    residual_tol: float = RESIDUAL_TOL
    t_points: int = T_GRID_POINTS

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.alpha_max <= 0 or self.scan_points < 2 or self.max_iter < 1:
            raise ValueError("alpha_max, scan_points and max_iter must be positive")

    def with_overrides(self, overrides: dict[str, str]) -> "SolverSettings":
        """Return a copy with the recognised overrides from a config file applied."""
        casts = {"alpha_max": float, "tau_damping": float, "t_points": int}
        names = {"alpha_max": "alpha_max", "tau_damping": "damping", "t_points": "t_points"}
        changes = {}
        for key, raw in overrides.items():
            try:
                changes[names[key]] = casts[key](raw)
            except ValueError as exc:
                raise ConfigError(f"{key} = {raw!r}") from exc
        return replace(self, **changes)


DEFAULT_SETTINGS = SolverSettings()
SOLVER_KEYS = ("alpha_max", "tau_damping", "t_points")


def parse_key_values(text: str) -> tuple[dict[str, str], list[tuple[float, float]]]:
    """
    Parse flat ``key = value`` text.

    Blank lines and ``#`` comments are ignored. ``atom = value mass`` may repeat and is
    collected separately; every other key may appear once.

    Args:
        text (str): File contents

    Returns:
        tuple: (scalar entries, list of (value, mass) atoms)
    """
    entries: dict[str, str] = {}
    atoms: list[tuple[float, float]] = []

    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value'")

        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key == "atom":
            fields = value.split()
            if len(fields) != 2:
                raise ConfigError(f"line {number}: atom needs 'value mass'")
            try:
                atoms.append((float(fields[0]), float(fields[1])))
            except ValueError as exc:
                raise ConfigError(f"line {number}: {value!r}") from exc
            continue

        if key in entries:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        entries[key] = value

    return entries, atoms


def read_key_values(path: str | Path) -> tuple[dict[str, str], list[tuple[float, float]]]:
    return parse_key_values(Path(path).read_text())
