"""Covering-ratio datasets and the two decay-curve fits.

Long memory:  X(t) = (1 + beta t)^(-alpha)
Exponential:  X(t) = exp(-lambda t)

Both are unweighted least squares on the average series, times in hours.
"""
import io
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import optimize

from .errors import DatasetParseError, DomainError
from .units import SECONDS_PER_HOUR

logger = logging.getLogger(__name__)

ALPHA_BOUNDS = (0.01, 2.0)
BETA_BOUNDS = (0.01, 10.0)  # per hour
GRID_SIZE = 100
LOG_LAMBDA_BOUNDS = (-6.0, 3.0)
AVERAGE_TOL = 1e-3

_SERIES_RE = re.compile(r"^h[1-9][0-9]*$")

Source = Union[str, Path, bytes, io.IOBase]


@dataclass(frozen=True, eq=False)
class DecayDataset:
    times_s: np.ndarray
    average: np.ndarray
    series: pd.DataFrame
    name: str = ""

    @property
    def times(self) -> np.ndarray:
        """Observation times in hours."""
        return self.times_s / SECONDS_PER_HOUR

    @property
    def n_points(self) -> int:
        return int(self.times_s.size)

    @property
    def n_series(self) -> int:
        return int(self.series.shape[1])

    @classmethod
    def from_hours(cls, times, average, name: str = "") -> "DecayDataset":
        """Dataset from an average series alone (no per-hemisphere columns)."""
        times_s = np.asarray(times, dtype=float) * SECONDS_PER_HOUR
        average = np.asarray(average, dtype=float)
        frame = pd.DataFrame({"h1": average})
        return cls(times_s=times_s, average=average, series=frame, name=name)


def _read_raw(source: Source) -> pd.DataFrame:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    try:
        return pd.read_csv(source, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise DatasetParseError("dataset is empty", row=None, column=None) from exc
    except pd.errors.ParserError as exc:
        raise DatasetParseError(f"malformed CSV: {exc}") from exc


def _check_header(columns: List[str]):
    if len(columns) < 3 or columns[0] != "time_s" or columns[1] != "avg":
        raise DatasetParseError(f"expected header 'time_s,avg,h1,...', got '{','.join(columns)}'", row=0)
    for col in columns[2:]:
        if not _SERIES_RE.match(col):
            raise DatasetParseError("series columns must be named h1..hN", row=0, column=col)


def _to_numbers(raw: pd.DataFrame) -> pd.DataFrame:
    # tolerate the '7.88.E-01' spelling of the printed tables
    cleaned = raw.apply(lambda col: col.str.strip().str.replace(r"\.(?=[eE])", "", regex=True))
    values = cleaned.apply(pd.to_numeric, errors="coerce")
    bad = values.isna()
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DatasetParseError(f"not a number: '{raw.iat[row, col]}'", row=int(row) + 1, column=raw.columns[col])
    return values


def load_dataset(source: Source, name: str = "") -> DecayDataset:
    """Parse a `time_s,avg,h1,...,hN` CSV and validate it."""
    raw = _read_raw(source)
    raw.columns = [str(c).strip() for c in raw.columns]
    _check_header(list(raw.columns))
    if raw.empty:
        raise DatasetParseError("dataset has no rows", row=1)
    values = _to_numbers(raw)

    times = values["time_s"].to_numpy(dtype=float)
    if times[0] != 0:
        raise DatasetParseError(f"times must start at 0, got {times[0]}", row=1, column="time_s")
    steps = np.diff(times)
    if np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0]) + 2
        raise DatasetParseError("times must be strictly increasing", row=row, column="time_s")

    data_cols = list(raw.columns[1:])
    block = values[data_cols].to_numpy(dtype=float)
    outside = (block < 0) | (block > 1)
    if outside.any():
        row, col = np.argwhere(outside)[0]
        raise DatasetParseError(f"value {block[row, col]} outside [0, 1]", row=int(row) + 1, column=data_cols[col])

    average = values["avg"].to_numpy(dtype=float)
    if average[0] != 1:
        raise DatasetParseError(f"average at t=0 must be 1, got {average[0]}", row=1, column="avg")
    series = values[data_cols[1:]].reset_index(drop=True)
    row_mean = series.mean(axis=1).to_numpy()
    off = np.abs(row_mean - average) > AVERAGE_TOL + 1e-12
    if off.any():
        row = int(np.flatnonzero(off)[0])
        raise DatasetParseError(
            f"average {average[row]} differs from the series mean {row_mean[row]:.4f}", row=row + 1, column="avg"
        )
    logger.info(f"loaded dataset {name or '<stream>'}: {times.size} times, {series.shape[1]} series")
    return DecayDataset(times_s=times, average=average, series=series, name=name)


class DecayModel(str, Enum):
    LONG_MEMORY = "long_memory"
    EXPONENTIAL = "exponential"


def long_memory_curve(t, alpha: float, beta: float):
    return (1.0 + beta * np.asarray(t, dtype=float)) ** (-alpha)


def exponential_curve(t, lam: float):
    return np.exp(-lam * np.asarray(t, dtype=float))


class FitResult(BaseModel):
    model: DecayModel
    params: Dict[str, float]
    sse: float = Field(ge=0)
    warnings: List[str] = Field(default_factory=list)
    times: List[float] = Field(default_factory=list)
    observed: List[float] = Field(default_factory=list)

    def curve(self, t):
        if self.model == DecayModel.LONG_MEMORY:
            return long_memory_curve(t, self.params["alpha"], self.params["beta"])
        return exponential_curve(t, self.params["lambda"])

    @property
    def fitted(self) -> np.ndarray:
        return self.curve(np.asarray(self.times))

    @property
    def residuals(self) -> np.ndarray:
        """fitted - observed."""
        return self.fitted - np.asarray(self.observed)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "observed": self.observed, "fitted": self.fitted})

    def summary(self) -> dict:
        return {"model": self.model.value, "params": self.params, "sse": self.sse, "warnings": self.warnings}


def _sse(pred, values) -> float:
    return float(np.sum((np.asarray(values) - pred) ** 2))


def fit_long_memory_curve(
    times,
    values,
    alpha_bounds: Tuple[float, float] = ALPHA_BOUNDS,
    beta_bounds: Tuple[float, float] = BETA_BOUNDS,
    grid_size: int = GRID_SIZE,
) -> Tuple[float, float, float, List[str]]:
    """(alpha, beta, sse, warnings) for data in any time unit; beta_bounds share that unit."""
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    if t.size < 3:
        raise DomainError(f"long-memory fit needs at least 3 points, got {t.size}")

    alphas = np.geomspace(*alpha_bounds, grid_size)
    betas = np.geomspace(*beta_bounds, grid_size)
    curves = (1.0 + betas[None, :, None] * t[None, None, :]) ** (-alphas[:, None, None])
    grid_sse = np.sum((curves - x) ** 2, axis=-1)
    i, j = np.unravel_index(int(np.argmin(grid_sse)), grid_sse.shape)
    best = (float(alphas[i]), float(betas[j]), float(grid_sse[i, j]))
    logger.debug(f"grid minimum alpha={best[0]:.4g} beta={best[1]:.4g} sse={best[2]:.3e}")

    def residual(s):
        return long_memory_curve(t, np.exp(s[0]), np.exp(s[1])) - x

    def objective(s):
        return float(np.sum(residual(s) ** 2))

    warnings: List[str] = []
    start = np.log([best[0], best[1]])
    simplex = optimize.minimize(
        objective, start, method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-20, "maxiter": 20_000, "maxfev": 40_000},
    )
    if not simplex.success:
        warnings.append(f"simplex descent did not converge: {simplex.message}")
        logger.warning(warnings[-1])
    candidates = [best, (float(np.exp(simplex.x[0])), float(np.exp(simplex.x[1])), float(simplex.fun))]

    polish = optimize.least_squares(residual, simplex.x, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10_000)
    if polish.success:
        a, b = np.exp(polish.x)
        candidates.append((float(a), float(b), _sse(long_memory_curve(t, a, b), x)))

    alpha, beta, sse = min(candidates, key=lambda c: c[2])
    return alpha, beta, sse, warnings


def _require_points(data: DecayDataset, n: int, what: str):
    if data.n_points < n:
        raise DomainError(f"{what} fit needs at least {n} data points, got {data.n_points}")


def fit_long_memory(data: DecayDataset) -> FitResult:
    _require_points(data, 3, "long-memory")
    alpha, beta, sse, warnings = fit_long_memory_curve(data.times, data.average)
    logger.info(f"long-memory fit {data.name}: alpha={alpha:.4f}, beta={beta:.4f}/h, sse={sse:.3e}")
    return FitResult(
        model=DecayModel.LONG_MEMORY,
        params={"alpha": alpha, "beta": beta},
        sse=sse,
        warnings=warnings,
        times=data.times.tolist(),
        observed=data.average.tolist(),
    )


def fit_exponential(data: DecayDataset) -> FitResult:
    """Bounded scalar search on log lambda in [-6, 3]."""
    _require_points(data, 2, "exponential")
    t, x = data.times, data.average
    lo, hi = LOG_LAMBDA_BOUNDS
    res = optimize.minimize_scalar(
        lambda s: _sse(exponential_curve(t, np.exp(s)), x),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 1000},
    )
    warnings: List[str] = []
    s = float(res.x)
    if not res.success:
        warnings.append(f"scalar search did not converge: {res.message}")
    if s - lo < 1e-4 or hi - s < 1e-4:
        warnings.append(f"log lambda = {s:.4f} sits on the search bound [{lo}, {hi}]")
    for w in warnings:
        logger.warning(w)
    lam = float(np.exp(s))
    return FitResult(
        model=DecayModel.EXPONENTIAL,
        params={"lambda": lam},
        sse=_sse(exponential_curve(t, lam), x),
        warnings=warnings,
        times=t.tolist(),
        observed=x.tolist(),
    )


class FitComparison(BaseModel):
    long_memory: FitResult
    exponential: FitResult
    sse_ratio: Optional[float] = None
    early_residual: float
    late_residual: float

    @property
    def long_memory_better(self) -> bool:
        return self.long_memory.sse < self.exponential.sse

    @property
    def exponential_misses_timescales(self) -> bool:
        """Too slow at the first observation, too fast at the last."""
        return self.early_residual > 0 and self.late_residual < 0


def compare_fits(data: DecayDataset) -> FitComparison:
    long_memory = fit_long_memory(data)
    exponential = fit_exponential(data)
    residuals = exponential.residuals
    nonzero = np.flatnonzero(data.times > 0)
    early = float(residuals[nonzero[0]]) if nonzero.size else 0.0
    ratio = exponential.sse / long_memory.sse if long_memory.sse > 0 else None
    return FitComparison(
        long_memory=long_memory,
        exponential=exponential,
        sse_ratio=ratio,
        early_residual=early,
        late_residual=float(residuals[-1]),
    )
