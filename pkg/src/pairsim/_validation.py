"""Shared error types and argument checks."""

from __future__ import annotations

import math


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


class StatisticalDegeneracyError(RuntimeError):
    """A statistic is undefined for the simulated tallies (e.g. zero accidentals)."""


class BoundaryMaximumError(StatisticalDegeneracyError):
    """The optimum of a grid search sits on the grid boundary."""


def require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{field}: {message}")


def require_finite(value: float, field: str) -> None:
    require(isinstance(value, (int, float)) and math.isfinite(value),
            field, f"must be a finite number, got {value!r}")


def require_probability(value: float, field: str, *, upper_open: bool = False) -> None:
    require_finite(value, field)
    if upper_open:
        require(0.0 <= value < 1.0, field, f"must lie in [0, 1), got {value!r}")
    else:
        require(0.0 <= value <= 1.0, field, f"must lie in [0, 1], got {value!r}")
