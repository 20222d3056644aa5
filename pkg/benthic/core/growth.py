"""Growth-rate decomposition G(x) = r x (1-x) (g+(x) - g-(x)).

Two instances are supported: the logistic case (g+ = 1, g- = 0) and the Allee
case (g+ = x, g- = a) whose threshold a may follow a sigmoid schedule in time.
"""
import logging
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import solve_ivp

from .errors import DomainError

logger = logging.getLogger(__name__)


class GrowthKind(str, Enum):
    LOGISTIC = "logistic"
    ALLEE = "allee"


class ScheduleDirection(str, Enum):
    DECREASING = "decreasing"
    # the sigmoid exactly as printed, rising from a_lower to a_upper
    INCREASING = "increasing"


class TimeSchedule(BaseModel):
    """Sigmoid Allee threshold connecting a_upper (early) and a_lower (late)."""

    model_config = ConfigDict(frozen=True)

    a_lower: float = Field(gt=0, lt=1)
    a_upper: float = Field(gt=0, lt=1)
    h: float = Field(gt=0)
    theta: float = Field(gt=0)
    direction: ScheduleDirection = ScheduleDirection.DECREASING

    @model_validator(mode="after")
    def _ordered(self):
        if not self.a_lower < self.a_upper:
            raise ValueError(f"a_lower ({self.a_lower}) must be below a_upper ({self.a_upper})")
        return self


def a_at(schedule: TimeSchedule, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr >= 0)):
        raise DomainError("schedule time must be nonnegative")
    half_span = 0.5 * (schedule.a_upper - schedule.a_lower)
    ramp = 1.0 + np.tanh((t_arr - schedule.h) / schedule.theta)
    if schedule.direction == ScheduleDirection.DECREASING:
        value = schedule.a_upper - half_span * ramp
    else:
        value = schedule.a_lower + half_span * ramp
    value = np.clip(value, schedule.a_lower, schedule.a_upper)
    return float(value) if np.ndim(t) == 0 else value


def schedule_profile(schedule: TimeSchedule, times) -> np.ndarray:
    return np.asarray(a_at(schedule, np.asarray(times, dtype=float)))


class GrowthSpec(BaseModel):
    """Intrinsic rate r (1/hour) and the g+/g- pair.

    An Allee spec carries either a constant threshold `a` or a `schedule`.
    """

    model_config = ConfigDict(frozen=True)

    kind: GrowthKind
    r: float = Field(ge=0)
    a: Optional[float] = Field(default=None, gt=0, lt=1)
    schedule: Optional[TimeSchedule] = None

    @model_validator(mode="after")
    def _threshold_source(self):
        if self.kind == GrowthKind.ALLEE:
            if (self.a is None) == (self.schedule is None):
                raise ValueError("an Allee spec needs exactly one of a constant 'a' or a 'schedule'")
        elif self.a is not None or self.schedule is not None:
            raise ValueError("a logistic spec takes no threshold")
        return self

    @classmethod
    def logistic(cls, r: float) -> "GrowthSpec":
        return cls(kind=GrowthKind.LOGISTIC, r=r)

    @classmethod
    def allee(cls, r: float, a: Optional[float] = None, schedule: Optional[TimeSchedule] = None) -> "GrowthSpec":
        return cls(kind=GrowthKind.ALLEE, r=r, a=a, schedule=schedule)

    @classmethod
    def decay_only(cls) -> "GrowthSpec":
        return cls(kind=GrowthKind.LOGISTIC, r=0.0)

    @property
    def is_constant(self) -> bool:
        return self.schedule is None

    def threshold(self, t: float = 0.0) -> float:
        if self.kind == GrowthKind.LOGISTIC:
            return 0.0
        if self.schedule is None:
            return float(self.a)
        return a_at(self.schedule, t)

    def at_time(self, t: float) -> "GrowthSpec":
        """Constant-threshold spec frozen at the schedule's value at t."""
        if self.is_constant:
            return self
        return GrowthSpec.allee(self.r, a=self.threshold(t))


def _clamp(x):
    # regularization: arguments are clamped into [0, 1] at evaluation time
    return np.clip(x, 0.0, 1.0)


def g_plus(spec: GrowthSpec, x):
    if spec.kind == GrowthKind.LOGISTIC:
        return 1.0 if np.ndim(x) == 0 else np.ones_like(np.asarray(x, dtype=float))
    clamped = _clamp(np.asarray(x, dtype=float))
    return float(clamped) if np.ndim(x) == 0 else clamped


def g_minus(spec: GrowthSpec, t: float, x):
    value = spec.threshold(t)
    if np.ndim(x) == 0:
        return value
    return np.full_like(np.asarray(x, dtype=float), value)


def growth_rate(spec: GrowthSpec, t: float, x):
    x_arr = np.asarray(x, dtype=float)
    if np.any(~((x_arr >= 0) & (x_arr <= 1))):
        raise DomainError("growth_rate is defined for x in [0, 1]")
    value = spec.r * x_arr * (1.0 - x_arr) * (g_plus(spec, x_arr) - g_minus(spec, t, x_arr))
    return float(value) if np.ndim(x) == 0 else value


def logistic_closed_form(x0: float, r: float, t):
    """x0 e^{rt} / (1 - x0 + x0 e^{rt}), written to avoid overflow for large rt."""
    if not 0.0 <= x0 <= 1.0:
        raise DomainError(f"x0 must lie in [0, 1], got {x0}")
    t_arr = np.asarray(t, dtype=float)
    if x0 == 0.0:
        value = np.zeros_like(t_arr)
    else:
        value = x0 / (x0 + (1.0 - x0) * np.exp(-r * t_arr))
    return float(value) if np.ndim(t) == 0 else value


def solve_scalar_growth(spec: GrowthSpec, x0: float, times, rtol: float = 1e-10) -> np.ndarray:
    """Reference solution of dx/dt = G(t, x) with decay switched off."""
    if not 0.0 <= x0 <= 1.0:
        raise DomainError(f"x0 must lie in [0, 1], got {x0}")
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[-1] <= 0:
        return np.full_like(times, x0)

    def rhs(t, y):
        x = float(np.clip(y[0], 0.0, 1.0))
        return [growth_rate(spec, t, x)]

    sol = solve_ivp(rhs, (0.0, float(times[-1])), [x0], t_eval=times, rtol=rtol, atol=1e-12, method="RK45")
    if not sol.success:
        logger.warning(f"scalar growth reference did not finish: {sol.message}")
    return np.clip(sol.y[0], 0.0, 1.0)
