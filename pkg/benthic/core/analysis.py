"""Computational studies built on the two solvers.

- micro-to-macro convergence rate with a power-law fit of the squared gap
- rate-induced tipping: classification over the abrasion multiplier eta and
  bisection for its critical value
- ensemble histograms of the terminal population with mode detection
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, model_validator
from scipy import signal, stats

from .errors import DegenerateFitError, DomainError, PreconditionError
from .growth import GrowthSpec, schedule_profile
from .macro_ide import simulate_macro
from .micro_sim import ensemble, initial_bits
from .rate_measure import QuantileLift, RateMeasure, build_quantile_lift
from .units import SimConfig

logger = logging.getLogger(__name__)

DEFAULT_BINS = 50
TIPPING_NODES = 1024
MODE_MIN_SHARE = 0.01
MODE_PROMINENCE = 0.1


# ---------------------------------------------------------------- convergence

class PowerLawFit(BaseModel):
    """Er = c * 2^(-p l)."""

    c: float = Field(gt=0)
    p: float
    r_squared: float = Field(ge=0, le=1)


class ConvergencePoint(BaseModel):
    l: int
    m: int
    er: float = Field(ge=0)
    spread: float = Field(default=0.0, ge=0)


class ConvergenceReport(BaseModel):
    points: List[ConvergencePoint]
    fit: Optional[PowerLawFit] = None
    n_seeds: int = 1

    @model_validator(mode="after")
    def _ordered(self):
        ls = [p.l for p in self.points]
        if ls != sorted(ls):
            raise ValueError("convergence points must be ordered by l")
        return self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"l": [p.l for p in self.points], "M": [p.m for p in self.points], "Er": [p.er for p in self.points]}
        )


def fit_power_law(points: Sequence[Tuple[int, float]]) -> PowerLawFit:
    """Least squares on (l, log2 Er): p = -slope, c = 2^intercept."""
    if len(points) < 2:
        raise DegenerateFitError(f"a power-law fit needs at least 2 points, got {len(points)}")
    ls = np.array([float(p[0]) for p in points])
    ers = np.array([float(p[1]) for p in points])
    if np.any(~(ers > 0)):
        raise DegenerateFitError("power-law fit needs every error to be positive")
    if np.ptp(ls) == 0:
        raise DegenerateFitError("power-law fit needs at least two distinct l values")
    reg = stats.linregress(ls, np.log2(ers))
    r_squared = float(min(1.0, max(0.0, reg.rvalue**2)))
    return PowerLawFit(c=float(2.0**reg.intercept), p=float(-reg.slope), r_squared=r_squared)


def squared_gap(micro, macro) -> float:
    """Mean over k >= 1 of (X_micro - X_macro)^2; the shared t = 0 value is skipped."""
    a = np.asarray(micro, dtype=float)
    b = np.asarray(macro, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"series lengths differ: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise DomainError("need at least one step beyond t = 0")
    return float(np.mean((a[1:] - b[1:]) ** 2))


def quantile_family(measure: RateMeasure) -> Callable[[int], QuantileLift]:
    return lambda m: build_quantile_lift(measure, m)


def convergence_study(
    lift_family: Callable[[int], QuantileLift],
    spec: GrowthSpec,
    config: SimConfig,
    l_range: Iterable[int],
    n_seeds: int = 16,
    workers: int = 1,
    fraction: float = 1.0,
    progress: Optional[Callable[[ConvergencePoint], None]] = None,
) -> ConvergenceReport:
    """Er(M) for M = 2^l, averaged over n_seeds micro paths against one macro run."""
    ls = sorted(set(int(l) for l in l_range))
    if not ls:
        raise DomainError("l_range must not be empty")
    if n_seeds < 1:
        raise DomainError(f"n_seeds must be at least 1, got {n_seeds}")

    points = []
    for l in ls:
        m = 2**l
        lift = lift_family(m)
        bits = initial_bits(m, fraction)
        macro = simulate_macro(bits.astype(float), lift, spec, config)
        runs = ensemble(bits, lift, spec, config, n_seeds, workers=workers, reference=macro.x)
        gaps = runs.gaps
        point = ConvergencePoint(
            l=l,
            m=m,
            er=float(gaps.mean()),
            spread=float(gaps.std(ddof=1)) if n_seeds > 1 else 0.0,
        )
        logger.info(f"convergence l={l} (M={m}): Er={point.er:.4e} +/- {point.spread:.2e}")
        points.append(point)
        if progress is not None:
            progress(point)

    report = ConvergenceReport(points=points, n_seeds=n_seeds)
    try:
        report.fit = fit_power_law([(p.l, p.er) for p in points])
        logger.info(f"fitted Er = {report.fit.c:.4g} * 2^(-{report.fit.p:.3f} l), R^2={report.fit.r_squared:.3f}")
    except DegenerateFitError as exc:
        logger.warning(f"no power-law fit: {exc}")
    return report


# ---------------------------------------------------------------- tipping

class Fate(str, Enum):
    EXTINCT = "extinct"
    PERSISTENT = "persistent"


def persistence_threshold(spec: GrowthSpec) -> float:
    """a_lower for a scheduled threshold, the constant a otherwise."""
    if spec.schedule is not None:
        return spec.schedule.a_lower
    return spec.threshold()


def classify_terminal(x_terminal: float, threshold: float) -> Fate:
    return Fate.PERSISTENT if x_terminal > threshold else Fate.EXTINCT


class TippingPoint(BaseModel):
    eta: float = Field(gt=0)
    fate: Fate
    terminal_x: float


class TippingResult(BaseModel):
    points: List[TippingPoint]
    threshold: float
    bracket: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _bracket_ordered(self):
        if self.bracket is not None and not self.bracket[0] < self.bracket[1]:
            raise ValueError(f"bracket must satisfy eta_lo < eta_hi, got {self.bracket}")
        return self

    @property
    def monotone(self) -> bool:
        """True when no persistent eta sits above an extinct one."""
        fates = [p.fate for p in sorted(self.points, key=lambda p: p.eta)]
        seen_extinct = False
        for fate in fates:
            if fate == Fate.EXTINCT:
                seen_extinct = True
            elif seen_extinct:
                return False
        return True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "eta": [p.eta for p in self.points],
            "classification": [p.fate.value for p in self.points],
            "terminal_X": [p.terminal_x for p in self.points],
        })


def _terminal_macro(eta: float, measure: RateMeasure, spec: GrowthSpec, config: SimConfig, m: int) -> float:
    lift = build_quantile_lift(measure.with_eta(eta), m)
    return simulate_macro(np.ones(m), lift, spec, config).terminal


def macro_classifier(
    measure: RateMeasure, spec: GrowthSpec, config: SimConfig, m: int = TIPPING_NODES
) -> Callable[[float], Fate]:
    threshold = persistence_threshold(spec)

    def classify(eta: float) -> Fate:
        fate = classify_terminal(_terminal_macro(eta, measure, spec, config, m), threshold)
        logger.debug(f"eta={eta:.6g}: {fate.value}")
        return fate

    return classify


def tipping_sweep(
    etas: Sequence[float],
    measure: RateMeasure,
    spec: GrowthSpec,
    config: SimConfig,
    m: int = TIPPING_NODES,
    workers: int = 1,
) -> TippingResult:
    """Classify each eta by the terminal macro population; the bracket is the first flip."""
    etas = sorted(float(e) for e in etas)
    if not etas:
        raise DomainError("need at least one eta")
    if workers > 1 and len(etas) > 1:
        terminals = Parallel(n_jobs=workers)(
            delayed(_terminal_macro)(eta, measure, spec, config, m) for eta in etas
        )
    else:
        terminals = [_terminal_macro(eta, measure, spec, config, m) for eta in etas]

    threshold = persistence_threshold(spec)
    points = [TippingPoint(eta=e, fate=classify_terminal(x, threshold), terminal_x=x) for e, x in zip(etas, terminals)]
    result = TippingResult(points=points, threshold=threshold)
    for left, right in zip(points[:-1], points[1:]):
        if left.fate != right.fate:
            result.bracket = (left.eta, right.eta)
            break
    if not result.monotone:
        logger.warning("classification is not monotone in eta over the scanned grid")
    return result


def bisect_tipping(lo: float, hi: float, tol: float, classifier: Callable[[float], Fate]) -> Tuple[float, float]:
    """Shrink [lo, hi] around the classification flip until hi - lo <= tol."""
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    lo, hi = float(min(lo, hi)), float(max(lo, hi))
    if lo == hi:
        raise PreconditionError("bisection needs lo != hi")
    fate_lo = classifier(lo)
    fate_hi = classifier(hi)
    if fate_lo == fate_hi:
        raise PreconditionError(f"both endpoints classify as {fate_lo.value}; no flip to bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if classifier(mid) == fate_lo:
            lo = mid
        else:
            hi = mid
        logger.debug(f"tipping bracket [{lo:.6g}, {hi:.6g}]")
    logger.info(f"critical eta in [{lo:.6g}, {hi:.6g}]")
    return lo, hi


@dataclass
class TippingTrajectories:
    times: np.ndarray
    threshold: np.ndarray
    series: Dict[float, np.ndarray] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.times, "a_t": self.threshold}
        for eta, xs in self.series.items():
            data[f"X_hat[eta={eta:g}]"] = xs
        return pd.DataFrame(data)


def tipping_trajectories(
    etas: Sequence[float],
    measure: RateMeasure,
    spec: GrowthSpec,
    config: SimConfig,
    m: int = TIPPING_NODES,
) -> TippingTrajectories:
    times = config.times()
    if spec.schedule is not None:
        threshold = schedule_profile(spec.schedule, times)
    else:
        threshold = np.full(times.size, spec.threshold())
    out = TippingTrajectories(times=times, threshold=threshold)
    for eta in etas:
        lift = build_quantile_lift(measure.with_eta(float(eta)), m)
        out.series[float(eta)] = simulate_macro(np.ones(m), lift, spec, config).x
    return out


# ---------------------------------------------------------------- histograms

class Histogram(BaseModel):
    bin_edges: List[float]
    counts: List[int]
    modes: List[float] = Field(default_factory=list)
    n_paths: int = Field(ge=1)
    m: Optional[int] = None
    eta: Optional[float] = None

    @model_validator(mode="after")
    def _conserved(self):
        if len(self.bin_edges) != len(self.counts) + 1:
            raise ValueError("need one more edge than counts")
        if sum(self.counts) != self.n_paths:
            raise ValueError(f"counts sum to {sum(self.counts)}, expected {self.n_paths}")
        return self

    @property
    def zero_share(self) -> float:
        return self.counts[0] / self.n_paths

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_lo": self.bin_edges[:-1], "bin_hi": self.bin_edges[1:], "count": self.counts})


def lattice_sizes(edges: np.ndarray, m: int) -> np.ndarray:
    """Number of attainable values k/M, k = 0..M, per bin (last bin closed)."""
    values = np.arange(m + 1) / m
    sizes, _ = np.histogram(values, bins=edges)
    return sizes


def detect_modes(
    counts,
    edges,
    m: Optional[int] = None,
    min_share: float = MODE_MIN_SHARE,
    prominence: float = MODE_PROMINENCE,
) -> List[float]:
    """Bin centers of local maxima, boundary bins included.

    With `m`, counts are divided by the number of attainable k/M values per bin
    so the lattice does not create alternating highs and lows. A mode must hold
    at least min_share of the paths and stand out by `prominence` times the
    tallest corrected bin.
    """
    counts = np.asarray(counts, dtype=float)
    edges = np.asarray(edges, dtype=float)
    total = counts.sum()
    if total <= 0:
        return []
    if m is not None:
        sizes = lattice_sizes(edges, m)
        keep = np.flatnonzero(sizes > 0)
        density = counts[keep] / sizes[keep]
    else:
        keep = np.arange(counts.size)
        density = counts
    padded = np.concatenate(([0.0], density, [0.0]))
    peaks, _ = signal.find_peaks(padded, prominence=prominence * density.max())
    centers = 0.5 * (edges[:-1] + edges[1:])
    modes = []
    for p in peaks - 1:
        b = keep[p]
        if counts[b] >= min_share * total:
            modes.append(float(centers[b]))
    return modes


def histogram_ensemble(
    eta: float,
    m: int,
    n_paths: int,
    measure: RateMeasure,
    spec: GrowthSpec,
    config: SimConfig,
    n_bins: int = DEFAULT_BINS,
    workers: int = 1,
) -> Histogram:
    """Terminal micro X over n_paths, binned uniformly on [0, 1]."""
    if n_paths < 1:
        raise DomainError(f"n_paths must be at least 1, got {n_paths}")
    if n_bins < 2:
        raise DomainError(f"n_bins must be at least 2, got {n_bins}")
    lift = build_quantile_lift(measure.with_eta(eta), m)
    runs = ensemble(initial_bits(m), lift, spec, config, n_paths, workers=workers)
    counts, edges = np.histogram(runs.terminal, bins=n_bins, range=(0.0, 1.0))
    modes = detect_modes(counts, edges, m=m)
    logger.info(f"histogram eta={eta:g} M={m}: zero share {counts[0] / n_paths:.3f}, modes {modes}")
    return Histogram(
        bin_edges=edges.tolist(),
        counts=counts.astype(int).tolist(),
        modes=modes,
        n_paths=n_paths,
        m=m,
        eta=eta,
    )


def histogram_sweep(
    measure: RateMeasure,
    spec: GrowthSpec,
    config: SimConfig,
    n_paths: int,
    etas: Sequence[float] = (0.008,),
    ms: Sequence[int] = (128,),
    n_bins: int = DEFAULT_BINS,
    workers: int = 1,
) -> List[Histogram]:
    """One histogram per (eta, M) pair, etas outer."""
    return [
        histogram_ensemble(float(eta), int(m), n_paths, measure, spec, config, n_bins=n_bins, workers=workers)
        for eta in etas
        for m in ms
    ]
