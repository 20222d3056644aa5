"""Gamma-type heterogeneity measure of spin (decay) rates.

Holds the measure F itself, its CDF/quantile machinery, the quantile-based
finite lift F_M, the Laplace transform (the long-memory decay curve) and the
total-variation distance between two measures.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, optimize, special

from .errors import DomainError, NumericalError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

QUANTILE_TOL = 1e-10
TAIL_MASS = 1e-9
CDF_GAP_GRID = 100_000

# quantile levels used as quadrature breakpoints; the last one is the tail cut
_BREAK_LEVELS = (1e-9, 1e-6, 1e-4, 1e-2, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999, 1 - 1e-5, 1 - TAIL_MASS)
_RULE_LEVELS = (1e-12,) + _BREAK_LEVELS + (1 - 1e-12,)


class RateMeasure(BaseModel):
    """Gamma(alpha, eta*beta) law of the per-site decay rate R (1/hour)."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    eta: float = Field(default=1.0, gt=0)

    @property
    def scale(self) -> float:
        return self.eta * self.beta

    @property
    def mean(self) -> float:
        return self.alpha * self.scale

    def with_eta(self, eta: float) -> "RateMeasure":
        return RateMeasure(alpha=self.alpha, beta=self.beta, eta=eta)


@dataclass(frozen=True, eq=False)
class QuantileLift:
    """M representative rates placed at the mid-quantiles (2i-1)/(2M)."""

    rates: np.ndarray

    def __post_init__(self):
        arr = np.array(self.rates, dtype=float).reshape(-1)
        if arr.size == 0:
            raise DomainError("a lift needs at least one rate")
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise DomainError("lift rates must be finite and nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "rates", arr)

    @property
    def m(self) -> int:
        return int(self.rates.size)

    @classmethod
    def decay_free(cls, m: int) -> "QuantileLift":
        """All rates zero: decay switched off, growth only."""
        return cls(np.zeros(_check_m(m)))

    def scaled(self, factor: float) -> "QuantileLift":
        if factor < 0:
            raise DomainError(f"scale factor must be nonnegative, got {factor}")
        return QuantileLift(self.rates * factor)

    def levels(self) -> np.ndarray:
        i = np.arange(1, self.m + 1)
        return (2 * i - 1) / (2.0 * self.m)


def _check_m(m) -> int:
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise DomainError(f"number of sites M must be a positive integer, got {m!r}")
    return int(m)


def _like(template, values: np.ndarray):
    if np.ndim(template) == 0:
        return float(values)
    return values


def _pdf(x, alpha: float, scale: float):
    # unchecked density; quad never evaluates at the endpoint 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_pdf = (alpha - 1.0) * np.log(x) - x / scale - special.gammaln(alpha) - alpha * np.log(scale)
        return np.exp(log_pdf)


def density(measure: RateMeasure, r: ArrayLike):
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 0)):
        raise DomainError("density is defined for r > 0 only")
    return _like(r, _pdf(r_arr, measure.alpha, measure.scale))


def cdf(measure: RateMeasure, r: ArrayLike):
    """F((0, r)) via the regularized lower incomplete gamma function."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr >= 0)):
        raise DomainError("cdf is defined for r >= 0 only")
    return _like(r, special.gammainc(measure.alpha, r_arr / measure.scale))


def _invert(measure: RateMeasure, p: float) -> float:
    """Bracketed root search on log R, then a Newton polish."""
    target = lambda s: special.gammainc(measure.alpha, np.exp(s) / measure.scale) - p  # noqa: E731
    # Markov: F(u) >= 1 - mean/u, so F(hi) >= p
    hi = measure.mean / (1.0 - p)
    lo = 1e-12
    while special.gammainc(measure.alpha, lo / measure.scale) >= p and lo > 1e-300:
        lo *= 1e-12
    bracket = (lo, hi)
    try:
        s = optimize.brentq(target, np.log(lo), np.log(hi), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (ValueError, RuntimeError) as exc:
        raise NumericalError(f"quantile search failed for p={p}: {exc}", bracket=bracket) from exc
    x = float(np.exp(s))
    for _ in range(3):
        residual = special.gammainc(measure.alpha, x / measure.scale) - p
        slope = _pdf(x, measure.alpha, measure.scale)
        if not np.isfinite(slope) or slope <= 0:
            break
        candidate = x - residual / slope
        if candidate <= 0:
            break
        if abs(special.gammainc(measure.alpha, candidate / measure.scale) - p) >= abs(residual):
            break
        x = candidate
    if abs(special.gammainc(measure.alpha, x / measure.scale) - p) > QUANTILE_TOL:
        raise NumericalError(f"quantile for p={p} did not reach tolerance {QUANTILE_TOL}", bracket=bracket)
    return x


def quantile(measure: RateMeasure, p: ArrayLike):
    """R with cdf(R) = p to within 1e-10 on p."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise DomainError("quantile level must lie in (0, 1)")
    flat = p_arr.reshape(-1)
    guess = special.gammaincinv(measure.alpha, flat) * measure.scale
    out = guess.copy()
    with np.errstate(invalid="ignore"):
        residual = np.abs(special.gammainc(measure.alpha, guess / measure.scale) - flat)
    bad = ~(np.isfinite(guess) & (guess > 0) & (residual <= QUANTILE_TOL))
    for idx in np.flatnonzero(bad):
        logger.debug(f"polishing quantile at p={flat[idx]:.3e}")
        out[idx] = _invert(measure, float(flat[idx]))
    return _like(p, out.reshape(p_arr.shape))


def build_quantile_lift(measure: RateMeasure, m: int) -> QuantileLift:
    m = _check_m(m)
    i = np.arange(1, m + 1)
    rates = quantile(measure, (2 * i - 1) / (2.0 * m))
    rates = np.atleast_1d(rates)
    if m > 1 and not np.all(np.diff(rates) > 0):
        raise NumericalError(f"quantile lift with M={m} is not strictly increasing")
    logger.debug(f"built quantile lift M={m}: R_1={rates[0]:.3e}, R_M={rates[-1]:.3e}")
    return QuantileLift(rates)


def laplace_transform(measure: RateMeasure, t: ArrayLike):
    """Long-memory decay curve (1 + eta*beta*t)^(-alpha) = E[exp(-R t)]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr >= 0)):
        raise DomainError("time must be nonnegative")
    return _like(t, (1.0 + measure.scale * t_arr) ** (-measure.alpha))


def cdf_gap(lift: QuantileLift, measure: RateMeasure) -> float:
    """sup_R |F((0,R)) - F_M((0,R))| over a dense log grid plus the lift's jump points."""
    rates = lift.rates
    m = lift.m
    positive = rates[rates > 0]
    lo = quantile(measure, TAIL_MASS)
    hi = quantile(measure, 1 - TAIL_MASS)
    if positive.size:
        lo = min(lo, positive[0] / 10.0)
        hi = max(hi, positive[-1] * 10.0)
    grid = np.geomspace(lo, hi, CDF_GAP_GRID)
    below = np.searchsorted(rates, grid, side="left") / m
    gap = float(np.max(np.abs(cdf(measure, grid) - below)))
    # at R_i the open interval (0, R_i) holds i-1 atoms; just past it, i atoms
    at_rates = cdf(measure, rates)
    left = np.searchsorted(rates, rates, side="left") / m
    right = np.searchsorted(rates, rates, side="right") / m
    gap = max(gap, float(np.max(np.abs(at_rates - left))), float(np.max(np.abs(at_rates - right))))
    return gap


def breakpoints(measure: RateMeasure) -> np.ndarray:
    return np.concatenate(([0.0], np.atleast_1d(quantile(measure, np.array(_BREAK_LEVELS)))))


def _log_pdf_r(s, alpha: float, scale: float):
    # log of f(R) * R at R = exp(s)
    with np.errstate(over="ignore"):
        return alpha * s - np.exp(s) / scale - special.gammaln(alpha) - alpha * np.log(scale)


def _quad(func, lo: float, hi: float, tol: float, n_seg: int) -> float:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, abserr = integrate.quad(func, lo, hi, epsabs=tol / n_seg, epsrel=tol, limit=200)
    if caught and abserr > tol:
        raise NumericalError(f"quadrature did not converge (error estimate {abserr:.2e})", bracket=(lo, hi))
    return value


def _quad_segments(
    term: Callable[[float, float], float], edges: np.ndarray, kappa: float, s_max: float, tol: float
) -> float:
    """Integrate over (0, exp(s_max)) in s = log R, split at ``edges``.

    ``term(s, shift)`` is the integrand in s (density times R) scaled by
    exp(-shift). The segment touching 0 is taken in u = R**kappa, where the
    R**(alpha-1) singularity is gone for kappa <= alpha.
    """
    positive = edges[edges > 0]
    logs = np.append(np.log(positive), s_max)
    logs = logs[logs <= s_max]
    n_seg = logs.size
    u_hi = float(np.exp(kappa * logs[0]))
    near_zero = lambda u: term(np.log(u) / kappa, np.log(u)) / kappa if u > 0 else 0.0  # noqa: E731
    total = _quad(near_zero, 0.0, u_hi, tol, n_seg)
    in_log = lambda s: term(s, 0.0)  # noqa: E731
    for lo, hi in zip(logs[:-1], logs[1:]):
        if hi > lo:
            total += _quad(in_log, float(lo), float(hi), tol, n_seg)
    return total


def _s_max(*scales: float) -> float:
    # exp(-R/scale) < 1e-300 beyond this
    return float(np.log(700.0 * max(scales)))


def expectation(measure: RateMeasure, func: Callable[[float], float], tol: float = 1e-10) -> float:
    """Integral of func against F, split at quantile breakpoints."""
    alpha, scale = measure.alpha, measure.scale

    def term(s, shift):
        return func(float(np.exp(s))) * float(np.exp(_log_pdf_r(s, alpha, scale) - shift))

    return _quad_segments(term, breakpoints(measure), alpha, _s_max(scale), tol)


def quadrature_rule(measure: RateMeasure, nodes_per_segment: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed Gauss-Legendre rule in log R between quantile breakpoints.

    Returns (nodes, weights) with sum(weights * g(nodes)) ~ E[g(R)]; used where
    many integrals against the same measure are needed at once.
    """
    edges = np.log(np.atleast_1d(quantile(measure, np.array(_RULE_LEVELS))))
    x, w = np.polynomial.legendre.leggauss(nodes_per_segment)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        s = lo + half * (x + 1.0)
        r = np.exp(s)
        nodes.append(r)
        weights.append(half * w * _pdf(r, measure.alpha, measure.scale) * r)
    return np.concatenate(nodes), np.concatenate(weights)


def tv_distance(a: RateMeasure, b: RateMeasure, tol: float = 1e-6) -> float:
    """(1/2) * integral of |f_a - f_b| by segment-wise adaptive quadrature."""
    edges = np.unique(np.concatenate((breakpoints(a), breakpoints(b))))

    def half_diff(s, shift):
        return 0.5 * abs(
            float(np.exp(_log_pdf_r(s, a.alpha, a.scale) - shift)) - float(np.exp(_log_pdf_r(s, b.alpha, b.scale) - shift))
        )

    value = _quad_segments(half_diff, edges, min(a.alpha, b.alpha), _s_max(a.scale, b.scale), tol)
    return float(min(1.0, max(0.0, value)))
