"""Microscopic stochastic system: M reversible spin processes.

A 0-site turns to 1 with hazard r X g+(X); a 1-site turns to 0 with the
superposed hazard r (1-X) g-(X) + R_i. Time is discretized with a fixed step
and the aggregate X is frozen at the start of each step.

Every path owns a private Philox stream keyed by (master seed, path index), so
a path's trajectory never depends on how paths are grouped or scheduled.
"""
import copy
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import DomainError
from .growth import GrowthKind, GrowthSpec, a_at, g_plus
from .rate_measure import QuantileLift
from .units import FlipRule, SimConfig

logger = logging.getLogger(__name__)

# upper bound on paths per work unit; grouping never changes results
BATCH_SIZE = int(os.environ.get("BENTHIC_BATCH_SIZE", "256"))
# upper bound on uniforms held per block (block steps x paths x sites)
BLOCK_ELEMENTS = 1 << 22


def derive_seed(master: int, k: int) -> int:
    """Seed of path k, mixed from the master seed by SeedSequence hashing."""
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=(int(k),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def initial_bits(m: int, fraction: float = 1.0) -> np.ndarray:
    """round(fraction*m) occupied sites spread evenly over the rate ordering."""
    if m < 1:
        raise DomainError(f"M must be positive, got {m}")
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"initial fraction must lie in [0, 1], got {fraction}")
    bits = np.zeros(m, dtype=bool)
    n_ones = int(round(fraction * m))
    if n_ones:
        idx = ((np.arange(n_ones) + 0.5) * m / n_ones).astype(int)
        bits[np.minimum(idx, m - 1)] = True
    return bits


def _check_bits(bits, m: int) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.shape != (m,):
        raise DomainError(f"expected {m} site values, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise DomainError("site values must be 0 or 1")
    return arr.astype(bool)


@dataclass(frozen=True, eq=False)
class MicroState:
    t: float
    bits: np.ndarray
    lift: QuantileLift
    rng: np.random.Generator

    def __post_init__(self):
        bits = _check_bits(self.bits, self.lift.m).copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def initial(cls, lift: QuantileLift, seed: int, bits=None) -> "MicroState":
        if bits is None:
            bits = initial_bits(lift.m)
        return cls(t=0.0, bits=bits, lift=lift, rng=make_generator(seed))


def aggregate(state: MicroState) -> float:
    return float(state.bits.mean())


def _decay_factor(rates: np.ndarray, dt: float, rule: FlipRule) -> np.ndarray:
    """Per-site decay term of the flip probability, fixed for a whole run."""
    if rule == FlipRule.LINEAR:
        return rates * dt
    return np.exp(-rates * dt)


def _thresholds(spec: GrowthSpec, times: np.ndarray) -> np.ndarray:
    if spec.kind == GrowthKind.LOGISTIC:
        return np.zeros(times.size)
    if spec.is_constant:
        return np.full(times.size, float(spec.a))
    return np.atleast_1d(a_at(spec.schedule, times))


def _advance(bits, x, decay, spec: GrowthSpec, a_t: float, dt: float, rule: FlipRule, uniforms):
    """One step for bits of shape (..., M) given aggregates x of shape (..., 1).

    1-sites flip with the superposed hazard, so with the exponential rule their
    survival factor splits into exp(-growth hazard * dt) times exp(-R_i dt).
    """
    up = spec.r * x * g_plus(spec, x)
    down = spec.r * (1.0 - x) * a_t
    if rule == FlipRule.LINEAR:
        p_up = np.minimum(up * dt, 1.0)
        p_down = np.minimum(down * dt + decay, 1.0)
    else:
        p_up = -np.expm1(-up * dt)
        p_down = 1.0 - np.exp(-down * dt) * decay
    return bits ^ (uniforms < np.where(bits, p_down, p_up))


def step_micro(state: MicroState, spec: GrowthSpec, dt: float, rule: FlipRule = FlipRule.EXPONENTIAL) -> MicroState:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    rng = copy.deepcopy(state.rng)
    uniforms = rng.random(state.lift.m)
    x = np.array([aggregate(state)])
    decay = _decay_factor(state.lift.rates, dt, rule)
    bits = _advance(state.bits, x, decay, spec, spec.threshold(state.t), dt, rule, uniforms)
    return MicroState(t=state.t + dt, bits=bits, lift=state.lift, rng=rng)


@dataclass
class _BatchOutcome:
    terminal: np.ndarray
    # occupied-site counts summed over paths; integer sums do not depend on batching
    sum_count: np.ndarray
    sum_count2: np.ndarray
    paths: Optional[np.ndarray] = None
    gaps: Optional[np.ndarray] = None
    bits: Optional[np.ndarray] = None


def _run_batch(
    start: np.ndarray,
    rates: np.ndarray,
    spec: GrowthSpec,
    config: SimConfig,
    seeds: Sequence[int],
    reference: Optional[np.ndarray] = None,
    keep_paths: bool = False,
    keep_bits: bool = False,
) -> _BatchOutcome:
    gens = [make_generator(s) for s in seeds]
    n_paths, m = len(seeds), rates.size
    n, dt = config.n_steps, config.dt

    bits = np.broadcast_to(start, (n_paths, m)).copy()
    count = bits.sum(axis=1)
    x = count / m
    idx = np.arange(n_paths)

    sum_count = np.zeros(n + 1, dtype=np.int64)
    sum_count2 = np.zeros(n + 1, dtype=np.int64)
    sum_count[0], sum_count2[0] = count.sum(), (count * count).sum()
    paths = np.zeros((n_paths, n + 1)) if keep_paths else None
    if paths is not None:
        paths[:, 0] = x
    bit_log = np.zeros((n + 1, m), dtype=np.uint8) if keep_bits else None
    if bit_log is not None:
        bit_log[0] = bits[0]
    gaps = np.zeros(n_paths) if reference is not None else None
    if reference is not None:
        # tail sums of ref^2 settle the gap of a path that went extinct early
        ref_sq_tail = np.concatenate((np.cumsum((reference**2)[::-1])[::-1], [0.0]))

    decay = _decay_factor(rates, dt, config.flip_rule)
    block = max(1, BLOCK_ELEMENTS // max(1, n_paths * m))
    k = 0
    while k < n and idx.size:
        c = min(block, n - k)
        uniforms = np.stack([gens[i].random((c, m)) for i in idx], axis=1)
        a_block = _thresholds(spec, (k + np.arange(c)) * dt)
        for j in range(c):
            step = k + j
            bits = _advance(bits, x[:, None], decay, spec, a_block[j], dt, config.flip_rule, uniforms[j])
            count = bits.sum(axis=1)
            x = count / m
            sum_count[step + 1] += count.sum()
            sum_count2[step + 1] += (count * count).sum()
            if paths is not None:
                paths[idx, step + 1] = x
            if bit_log is not None:
                bit_log[step + 1] = bits[0]
            if gaps is not None:
                gaps[idx] += (x - reference[step + 1]) ** 2
        k += c
        alive = x > 0
        if not alive.all():
            # extinction is absorbing: the path stays at 0 from here on
            if gaps is not None:
                gaps[idx[~alive]] += ref_sq_tail[k + 1]
            logger.debug(f"{int((~alive).sum())} paths extinct by step {k}")
            idx, bits, x = idx[alive], bits[alive], x[alive]

    terminal = np.zeros(n_paths)
    terminal[idx] = x
    if gaps is not None and n > 0:
        gaps /= n
    return _BatchOutcome(
        terminal=terminal, sum_count=sum_count, sum_count2=sum_count2, paths=paths, gaps=gaps, bits=bit_log
    )


@dataclass
class PathResult:
    times: np.ndarray
    x: np.ndarray
    seed: int
    bits: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "X": self.x})

    def site_frame(self) -> pd.DataFrame:
        if self.bits is None:
            raise DomainError("site values were not recorded for this path")
        steps, m = self.bits.shape
        return pd.DataFrame({
            "t": np.repeat(self.times, m),
            "i": np.tile(np.arange(1, m + 1), steps),
            "bit": self.bits.reshape(-1),
        })


def simulate_path(
    bits,
    lift: QuantileLift,
    spec: GrowthSpec,
    config: SimConfig,
    record_bits: bool = False,
) -> PathResult:
    start = _check_bits(bits, lift.m)
    outcome = _run_batch(start, lift.rates, spec, config, [config.seed], keep_paths=True, keep_bits=record_bits)
    return PathResult(times=config.times(), x=outcome.paths[0], seed=config.seed, bits=outcome.bits)


@dataclass
class EnsembleResult:
    times: np.ndarray
    terminal: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    n_paths: int
    seed: int
    gaps: Optional[np.ndarray] = None
    paths: Optional[np.ndarray] = None

    def terminal_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"path_id": np.arange(self.n_paths), "X_T": self.terminal})

    def summary(self) -> dict:
        return {
            "mean": float(self.mean[-1]),
            "variance": float(self.variance[-1]),
            "n_paths": self.n_paths,
            "seed": self.seed,
        }


def _batches(seeds: List[int], size: int) -> List[List[int]]:
    size = max(1, size)
    return [seeds[i:i + size] for i in range(0, len(seeds), size)]


def ensemble(
    bits,
    lift: QuantileLift,
    spec: GrowthSpec,
    config: SimConfig,
    n_paths: int,
    workers: int = 1,
    reference: Optional[np.ndarray] = None,
    keep_paths: bool = False,
) -> EnsembleResult:
    """Independent paths with seeds derive_seed(config.seed, k), k = 0..n_paths-1."""
    if n_paths < 1:
        raise DomainError(f"n_paths must be at least 1, got {n_paths}")
    start = _check_bits(bits, lift.m)
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != (config.n_steps + 1,):
            raise DomainError("reference series must have one value per recorded time")
    seeds = [derive_seed(config.seed, k) for k in range(n_paths)]
    # small ensembles still spread over every worker
    size = min(BATCH_SIZE, -(-n_paths // max(1, workers)))
    chunks = _batches(seeds, size)
    logger.info(f"ensemble: {n_paths} paths, M={lift.m}, {config.n_steps} steps, {len(chunks)} batches")

    args = (start, lift.rates, spec, config)
    if workers > 1 and len(chunks) > 1:
        outcomes = Parallel(n_jobs=workers)(
            delayed(_run_batch)(*args, chunk, reference, keep_paths) for chunk in chunks
        )
    else:
        outcomes = [_run_batch(*args, chunk, reference, keep_paths) for chunk in chunks]

    m = lift.m
    sum_count = np.sum([o.sum_count for o in outcomes], axis=0)
    sum_count2 = np.sum([o.sum_count2 for o in outcomes], axis=0)
    mean = sum_count / (n_paths * m)
    if n_paths > 1:
        variance = np.maximum(sum_count2 / float(m * m) - n_paths * mean**2, 0.0) / (n_paths - 1)
    else:
        variance = np.zeros_like(mean)
    return EnsembleResult(
        times=config.times(),
        terminal=np.concatenate([o.terminal for o in outcomes]),
        mean=mean,
        variance=variance,
        n_paths=n_paths,
        seed=config.seed,
        gaps=np.concatenate([o.gaps for o in outcomes]) if reference is not None else None,
        paths=np.concatenate([o.paths for o in outcomes]) if keep_paths else None,
    )


def decay_mean_variance(lift: QuantileLift, t) -> Tuple:
    """Exact mean (1/M) sum e^{-R_i t} and variance (1/M^2) sum e^{-R_i t}(1 - e^{-R_i t})."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr >= 0)):
        raise DomainError("time must be nonnegative")
    survival = np.exp(-np.multiply.outer(t_arr, lift.rates))
    mean = survival.mean(axis=-1)
    variance = (survival * (1.0 - survival)).sum(axis=-1) / lift.m**2
    if np.ndim(t) == 0:
        return float(mean), float(variance)
    return mean, variance
