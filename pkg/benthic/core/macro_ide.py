"""Macroscopic population dynamics: a continuum of ODEs in the decay rate R,
coupled through the aggregate X = integral of x(R) F(dR).

The continuum is discretized at the nodes of a quantile lift (uniform weights
1/M) and stepped explicitly. Stationary equilibria come from the consistency
equation H(X) = 1.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import optimize

from .errors import DomainError, NumericalError
from .growth import GrowthKind, GrowthSpec, g_minus, g_plus
from .rate_measure import (
    QuantileLift,
    RateMeasure,
    build_quantile_lift,
    expectation,
    laplace_transform,
    quadrature_rule,
)
from .units import SimConfig, Stepper

logger = logging.getLogger(__name__)

SCAN_POINTS = 10_000
ROOT_XTOL = 1e-10
H_TOL = 1e-10
RULE_AGREEMENT = 1e-6
PROFILE_NODES = 1024


@dataclass(frozen=True, eq=False)
class MacroState:
    t: float
    occupancy: np.ndarray
    lift: QuantileLift

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=float).reshape(-1)
        if occ.size != self.lift.m:
            raise DomainError(f"expected {self.lift.m} node values, got {occ.size}")
        if np.any(~((occ >= 0) & (occ <= 1))):
            raise DomainError("occupancy values must lie in [0, 1]")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def aggregate(self) -> float:
        return float(self.occupancy.mean())


def _rates_at(spec: GrowthSpec, t: float, x: float):
    gain = spec.r * x * g_plus(spec, x)
    loss_growth = gain + spec.r * (1.0 - x) * g_minus(spec, t, x)
    return gain, loss_growth


def _advance(occ: np.ndarray, rates: np.ndarray, spec: GrowthSpec, t: float, dt: float, stepper: Stepper) -> np.ndarray:
    x = float(occ.mean())
    gain, loss_growth = _rates_at(spec, t, x)
    loss = rates + loss_growth
    if stepper == Stepper.EXPONENTIAL:
        # exact per-node solution of the linear ODE with the aggregate frozen
        with np.errstate(divide="ignore", invalid="ignore"):
            target = np.where(loss > 0, gain / loss, occ)
        new = target + (occ - target) * np.exp(-loss * dt)
    else:
        new = occ + dt * (gain - loss * occ)
    # explicit Euler can overshoot at nodes with R_i * dt > 1
    return np.clip(new, 0.0, 1.0)


def step_macro(state: MacroState, spec: GrowthSpec, dt: float, stepper: Stepper = Stepper.EULER) -> MacroState:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    occ = _advance(state.occupancy, state.lift.rates, spec, state.t, dt, stepper)
    return MacroState(t=state.t + dt, occupancy=occ, lift=state.lift)


@dataclass
class MacroPath:
    times: np.ndarray
    x: np.ndarray
    rates: np.ndarray
    nodes: Optional[np.ndarray] = None

    @property
    def terminal(self) -> float:
        return float(self.x[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "X_hat": self.x})

    def node_frame(self) -> pd.DataFrame:
        if self.nodes is None:
            raise DomainError("node values were not recorded for this run")
        steps, m = self.nodes.shape
        return pd.DataFrame({
            "t": np.repeat(self.times, m),
            "R_i": np.tile(self.rates, steps),
            "x_hat_i": self.nodes.reshape(-1),
        })


def simulate_macro(occupancy, lift: QuantileLift, spec: GrowthSpec, config: SimConfig, record_nodes: bool = False) -> MacroPath:
    occ = MacroState(t=0.0, occupancy=occupancy, lift=lift).occupancy.copy()
    n, dt = config.n_steps, config.dt
    xs = np.empty(n + 1)
    xs[0] = occ.mean()
    nodes = np.empty((n + 1, lift.m)) if record_nodes else None
    if nodes is not None:
        nodes[0] = occ
    for k in range(n):
        occ = _advance(occ, lift.rates, spec, k * dt, dt, config.stepper)
        xs[k + 1] = occ.mean()
        if nodes is not None:
            nodes[k + 1] = occ
    logger.debug(f"macro run M={lift.m}: {n} steps, X_T={xs[-1]:.6f}")
    return MacroPath(times=config.times(), x=xs, rates=lift.rates.copy(), nodes=nodes)


def decay_only_solution(measure: RateMeasure, t):
    """Limit of the decay-only system: the Laplace transform of F."""
    return laplace_transform(measure, t)


class Classification(str, Enum):
    STABLE = "stable"
    SADDLE = "saddle"


class EquilibriumRoot(BaseModel):
    x: float
    classification: Classification
    residual: float = 0.0


class EquilibriumResult(BaseModel):
    roots: List[EquilibriumRoot] = Field(default_factory=list)
    extinction_only: bool = True
    profile: Optional[List[float]] = None
    rates: Optional[List[float]] = None

    @property
    def stable(self) -> Optional[EquilibriumRoot]:
        return next((r for r in self.roots if r.classification == Classification.STABLE), None)


def _require_constant(spec: GrowthSpec):
    if not spec.is_constant:
        raise DomainError("equilibria need a time-independent threshold; use spec.at_time(t)")


def _integrand(spec: GrowthSpec, x, rates):
    """g+(x) / (R/r + x g+(x) + (1-x) g-(x)); broadcasts x against rates."""
    gp = g_plus(spec, x)
    denominator = x * gp + (1.0 - x) * g_minus(spec, 0.0, x)
    return gp / (rates / spec.r + denominator)


def h_function(x: float, measure: RateMeasure, spec: GrowthSpec) -> float:
    """H(X) = (1/X) integral of x_inf(R) F(dR); positive equilibria solve H = 1."""
    if not 0.0 < x <= 1.0:
        raise DomainError(f"H is defined on (0, 1], got {x}")
    _require_constant(spec)
    if spec.r == 0:
        return 0.0
    return expectation(measure, lambda rate: _integrand(spec, x, rate), tol=H_TOL)


def h_derivative(x: float, measure: RateMeasure, spec: GrowthSpec) -> float:
    if not 0.0 < x <= 1.0:
        raise DomainError(f"dH/dX is defined on (0, 1], got {x}")
    _require_constant(spec)
    if spec.r == 0:
        return 0.0
    a = spec.threshold()
    if spec.kind == GrowthKind.ALLEE:
        term = lambda rate: (rate / spec.r + a - x * x) / (rate / spec.r + x * x - a * x + a) ** 2  # noqa: E731
    else:
        term = lambda rate: -1.0 / (rate / spec.r + x) ** 2  # noqa: E731
    return expectation(measure, term, tol=H_TOL)


def _h_discrete(x, rates: np.ndarray, spec: GrowthSpec):
    """H against F_M: plain average over lift nodes."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.size)
    chunk = max(1, (1 << 22) // max(1, rates.size))
    for i in range(0, x.size, chunk):
        xs = x[i:i + chunk, None]
        out[i:i + chunk] = _integrand(spec, xs, rates[None, :]).mean(axis=1)
    return out


def h_curve(xs, measure: RateMeasure, spec: GrowthSpec, lift: Optional[QuantileLift] = None) -> np.ndarray:
    """H sampled at xs, against F_M when a lift is given."""
    xs = np.asarray(xs, dtype=float)
    if lift is not None:
        _require_constant(spec)
        if np.any(~((xs > 0) & (xs <= 1))):
            raise DomainError("H is defined on (0, 1]")
        if spec.r == 0:
            return np.zeros(xs.size)
        return _h_discrete(xs, lift.rates, spec)
    return np.array([h_function(float(x), measure, spec) for x in xs])


def equilibrium_profile(x_inf: float, spec: GrowthSpec, lift: QuantileLift) -> np.ndarray:
    """x_inf(R_i) = r X g+(X) / (R_i + r X g+(X) + r (1-X) g-(X)) at the lift nodes."""
    _require_constant(spec)
    gain, loss_growth = _rates_at(spec, 0.0, x_inf)
    if gain == 0:
        return np.zeros(lift.m)
    return gain / (lift.rates + loss_growth)


def _classify(roots: List[float]) -> List[EquilibriumRoot]:
    # H rises to a single maximum and falls: downward crossings are stable
    ordered = sorted(roots, reverse=True)
    return [
        EquilibriumRoot(x=x, classification=Classification.STABLE if i % 2 == 0 else Classification.SADDLE)
        for i, x in enumerate(ordered)
    ]


def _rule_h(xs: np.ndarray, nodes: np.ndarray, weights: np.ndarray, spec: GrowthSpec) -> np.ndarray:
    """H against F through a fixed quadrature rule, vectorized over xs."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty(xs.size)
    for i in range(0, xs.size, 512):
        chunk = xs[i:i + 512, None]
        out[i:i + 512] = (_integrand(spec, chunk, nodes[None, :]) * weights[None, :]).sum(axis=1)
    return out


def solve_equilibrium(
    measure: RateMeasure,
    spec: GrowthSpec,
    lift: Optional[QuantileLift] = None,
    scan_points: int = SCAN_POINTS,
    profile_nodes: int = PROFILE_NODES,
) -> EquilibriumResult:
    """Positive roots of H(X) = 1 plus the stable profile.

    With a lift, H is taken against F_M itself so the profile is an exact
    fixed point of the discrete stepper. Otherwise H is taken against F and
    the profile is reported at the nodes of a ``profile_nodes``-point lift.
    """
    _require_constant(spec)
    if spec.r == 0:
        return EquilibriumResult(extinction_only=True)
    grid = np.linspace(0.0, 1.0, scan_points + 1)[1:]

    if lift is not None:
        rates = lift.rates
        h_scan = lambda x: _h_discrete(x, rates, spec)  # noqa: E731
    else:
        nodes, weights = quadrature_rule(measure)
        h_scan = lambda x: _rule_h(x, nodes, weights, spec)  # noqa: E731

    scan = h_scan(grid)
    excess = scan - 1.0
    crossings = np.flatnonzero(np.sign(excess[:-1]) * np.sign(excess[1:]) < 0)
    logger.debug(f"H scan: max {scan.max():.6f} at X={grid[int(np.argmax(scan))]:.4f}, {crossings.size} crossings")

    # refine on the same H the scan used, so every bracket keeps its sign change
    f = lambda x: float(h_scan(x)[0]) - 1.0  # noqa: E731
    roots: List[float] = []
    residuals: List[float] = []
    for c in crossings:
        lo, hi = grid[c], grid[c + 1]
        try:
            root = optimize.brentq(f, lo, hi, xtol=ROOT_XTOL, maxiter=200)
        except (ValueError, RuntimeError) as exc:
            raise NumericalError(f"root refinement failed: {exc}", bracket=(lo, hi)) from exc
        residual = abs(f(root)) if lift is not None else abs(h_function(root, measure, spec) - 1.0)
        if residual > RULE_AGREEMENT:
            raise NumericalError(
                f"H at root X={root:.8f} is off by {residual:.2e}; quadrature rule and adaptive H disagree",
                bracket=(lo, hi),
            )
        roots.append(float(root))
        residuals.append(residual)

    if not roots:
        logger.info("consistency equation has no interior root: extinction is the only equilibrium")
        return EquilibriumResult(extinction_only=True)

    classified = _classify(roots)
    by_x = dict(zip(roots, residuals))
    for item in classified:
        item.residual = float(by_x[item.x])
    result = EquilibriumResult(roots=classified, extinction_only=False)
    stable = result.stable
    if stable is not None:
        nodes_lift = lift if lift is not None else build_quantile_lift(measure, profile_nodes)
        result.profile = equilibrium_profile(stable.x, spec, nodes_lift).tolist()
        result.rates = nodes_lift.rates.tolist()
    logger.info(f"equilibria: {[(round(r.x, 6), r.classification.value) for r in classified]}")
    return result
