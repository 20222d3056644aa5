"""Time units and the shared time-discretization record.

Every rate and duration is held internally in hours: gamma scales are
tabulated per hour while step sizes, schedule shifts and horizons are usually
quoted in days. Text inputs carry a unit suffix and are converted here once.
"""
import re
from enum import Enum
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DomainError


class TimeUnit(str, Enum):
    HOUR = "h"
    DAY = "d"


HOURS_PER_UNIT = {TimeUnit.HOUR: 1.0, TimeUnit.DAY: 24.0}
SECONDS_PER_HOUR = 3600.0

_UNIT_ALIASES = {
    "h": TimeUnit.HOUR, "hr": TimeUnit.HOUR, "hour": TimeUnit.HOUR, "hours": TimeUnit.HOUR,
    "d": TimeUnit.DAY, "day": TimeUnit.DAY, "days": TimeUnit.DAY,
}

_DURATION_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Z]*)\s*$")
_RATE_RE = re.compile(
    r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(?:/|per\s+)?\s*([a-zA-Z]*)\s*$"
)


def _unit(token: str, default: Optional[TimeUnit]) -> TimeUnit:
    if not token:
        if default is None:
            raise DomainError("missing time unit suffix (use 'h' or 'd')")
        return default
    unit = _UNIT_ALIASES.get(token.lower())
    if unit is None:
        raise DomainError(f"unknown time unit '{token}' (use 'h' or 'd')")
    return unit


def to_hours(value: float, unit: Union[TimeUnit, str]) -> float:
    return float(value) * HOURS_PER_UNIT[TimeUnit(unit)]


def from_hours(value: float, unit: Union[TimeUnit, str]) -> float:
    return float(value) / HOURS_PER_UNIT[TimeUnit(unit)]


def rate_to_per_hour(value: float, unit: Union[TimeUnit, str]) -> float:
    return float(value) / HOURS_PER_UNIT[TimeUnit(unit)]


def rate_from_per_hour(value: float, unit: Union[TimeUnit, str]) -> float:
    return float(value) * HOURS_PER_UNIT[TimeUnit(unit)]


def parse_duration(text: Union[str, float, int], default_unit: Optional[TimeUnit] = TimeUnit.HOUR) -> float:
    """Parse '6h', '0.001d', '30 days' (or a bare number in `default_unit`) to hours."""
    if isinstance(text, (int, float)):
        if default_unit is None:
            raise DomainError("missing time unit suffix (use 'h' or 'd')")
        return to_hours(text, default_unit)
    match = _DURATION_RE.match(str(text))
    if not match:
        raise DomainError(f"cannot parse duration '{text}'")
    value, token = match.groups()
    return to_hours(float(value), _unit(token, default_unit))


def parse_rate(text: Union[str, float, int], default_unit: Optional[TimeUnit] = TimeUnit.HOUR) -> float:
    """Parse '0.3/d', '1.431/h' (or a bare number per `default_unit`) to 1/hour."""
    if isinstance(text, (int, float)):
        if default_unit is None:
            raise DomainError("missing rate unit suffix (use '/h' or '/d')")
        return rate_to_per_hour(text, default_unit)
    match = _RATE_RE.match(str(text))
    if not match:
        raise DomainError(f"cannot parse rate '{text}'")
    value, token = match.groups()
    return rate_to_per_hour(float(value), _unit(token, default_unit))


class FlipRule(str, Enum):
    """How a hazard λ over one step becomes a flip probability."""

    EXPONENTIAL = "exponential"  # 1 - exp(-λ dt)
    LINEAR = "linear"  # min(1, λ dt)


class Stepper(str, Enum):
    EULER = "euler"
    EXPONENTIAL = "exponential"


class SimConfig(BaseModel):
    """Time grid shared by the stochastic and the continuum solvers (hours)."""

    model_config = ConfigDict(frozen=True)

    dt: float = Field(gt=0)
    horizon: float = Field(gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    time_unit: TimeUnit = TimeUnit.HOUR
    max_steps: Optional[int] = Field(default=None, ge=0)
    flip_rule: FlipRule = FlipRule.EXPONENTIAL
    stepper: Stepper = Stepper.EULER

    @model_validator(mode="after")
    def _horizon_covers_step(self):
        if self.horizon < self.dt * (1.0 - 1e-12):
            raise ValueError(f"horizon {self.horizon} must be at least dt {self.dt}")
        return self

    @classmethod
    def from_units(cls, dt: str, horizon: str, **kwargs) -> "SimConfig":
        return cls(dt=parse_duration(dt), horizon=parse_duration(horizon), **kwargs)

    @property
    def n_steps(self) -> int:
        n = int(round(self.horizon / self.dt))
        if self.max_steps is not None:
            n = min(n, self.max_steps)
        return n

    def times(self) -> np.ndarray:
        """Recorded times k·dt, k = 0..n_steps."""
        return np.arange(self.n_steps + 1, dtype=float) * self.dt

    def with_seed(self, seed: int) -> "SimConfig":
        return self.model_copy(update={"seed": int(seed)})
