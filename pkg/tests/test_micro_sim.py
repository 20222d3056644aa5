import numpy as np
import pytest
from joblib import parallel_backend

from benthic.core import micro_sim
from benthic.core.errors import DomainError
from benthic.core.growth import GrowthSpec, TimeSchedule
from benthic.core.micro_sim import (
    MicroState,
    aggregate,
    decay_mean_variance,
    derive_seed,
    ensemble,
    initial_bits,
    simulate_path,
    step_micro,
)
from benthic.core.rate_measure import QuantileLift, RateMeasure, build_quantile_lift
from benthic.core.units import FlipRule, SimConfig


def test_derive_seed_is_deterministic_and_distinct():
    assert derive_seed(7, 0) == derive_seed(7, 0)
    seeds = {derive_seed(7, k) for k in range(100)}
    assert len(seeds) == 100
    assert derive_seed(7, 0) != derive_seed(8, 0)


def test_initial_bits():
    assert initial_bits(8).all()
    half = initial_bits(8, 0.5)
    assert half.sum() == 4
    assert not initial_bits(5, 0.0).any()
    with pytest.raises(DomainError):
        initial_bits(4, 1.5)
    with pytest.raises(DomainError):
        initial_bits(0)


class TestStep:
    def test_bits_stay_binary(self, case1):
        lift = build_quantile_lift(case1, 32)
        state = MicroState.initial(lift, seed=3)
        spec = GrowthSpec.allee(1.0, a=0.25)
        for _ in range(20):
            state = step_micro(state, spec, 0.1)
            assert state.bits.dtype == bool
            assert state.bits.shape == (32,)
        assert state.t == pytest.approx(2.0)

    def test_step_does_not_consume_input_stream(self, case1):
        lift = build_quantile_lift(case1, 16)
        state = MicroState.initial(lift, seed=11)
        a = step_micro(state, GrowthSpec.decay_only(), 0.5)
        b = step_micro(state, GrowthSpec.decay_only(), 0.5)
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_extinction_is_absorbing(self, case1):
        lift = build_quantile_lift(case1, 16)
        state = MicroState.initial(lift, seed=1, bits=np.zeros(16))
        for _ in range(50):
            state = step_micro(state, GrowthSpec.logistic(5.0), 0.1)
        assert not state.bits.any()

    def test_no_decay_no_growth_is_frozen(self):
        lift = QuantileLift.decay_free(10)
        bits = initial_bits(10, 0.5)
        state = MicroState.initial(lift, seed=2, bits=bits)
        for rule in FlipRule:
            nxt = step_micro(state, GrowthSpec.decay_only(), 1.0, rule)
            np.testing.assert_array_equal(nxt.bits, bits)

    def test_rejects_bad_bits(self, case1):
        lift = build_quantile_lift(case1, 3)
        with pytest.raises(DomainError):
            MicroState.initial(lift, seed=0, bits=[1, 2, 0])
        with pytest.raises(DomainError):
            MicroState.initial(lift, seed=0, bits=[1, 0])


def test_zero_steps_keeps_initial_state(case1):
    lift = build_quantile_lift(case1, 4)
    config = SimConfig(dt=0.024, horizon=0.024, max_steps=0, seed=7)
    path = simulate_path(initial_bits(4), lift, GrowthSpec.allee(0.0125, a=0.25), config)
    np.testing.assert_array_equal(path.x, [1.0])
    assert list(path.to_frame().columns) == ['t', 'X']


def test_path_site_frame(case1):
    lift = build_quantile_lift(case1, 4)
    config = SimConfig(dt=0.1, horizon=0.5, seed=1)
    path = simulate_path(initial_bits(4), lift, GrowthSpec.decay_only(), config, record_bits=True)
    frame = path.site_frame()
    assert list(frame.columns) == ['t', 'i', 'bit']
    assert len(frame) == 6 * 4
    # aggregate equals the mean of the recorded sites
    np.testing.assert_allclose(frame.groupby('t')['bit'].mean().to_numpy(), path.x)


def test_path_is_seed_deterministic(case1):
    lift = build_quantile_lift(case1, 64)
    config = SimConfig(dt=0.05, horizon=5.0, seed=42)
    spec = GrowthSpec.allee(0.5, a=0.25)
    a = simulate_path(initial_bits(64), lift, spec, config)
    b = simulate_path(initial_bits(64), lift, spec, config)
    np.testing.assert_array_equal(a.x, b.x)
    c = simulate_path(initial_bits(64), lift, spec, config.with_seed(43))
    assert not np.array_equal(a.x, c.x)


def test_ensemble_independent_of_batching_and_workers(case1, monkeypatch):
    lift = build_quantile_lift(case1, 16)
    config = SimConfig(dt=0.05, horizon=2.0, seed=5)
    spec = GrowthSpec.allee(1.0, a=0.25)
    reference = ensemble(initial_bits(16), lift, spec, config, 20)
    monkeypatch.setattr(micro_sim, 'BATCH_SIZE', 6)
    with parallel_backend('threading'):
        regrouped = ensemble(initial_bits(16), lift, spec, config, 20, workers=3)
    np.testing.assert_array_equal(reference.terminal, regrouped.terminal)
    np.testing.assert_array_equal(reference.mean, regrouped.mean)
    np.testing.assert_array_equal(reference.variance, regrouped.variance)


def test_ensemble_gaps_match_recorded_paths(monkeypatch):
    # fast decay with short blocks: most paths go extinct early and leave the batch
    monkeypatch.setattr(micro_sim, 'BLOCK_ELEMENTS', 600)
    lift = build_quantile_lift(RateMeasure(alpha=1.0, beta=50.0), 2)
    config = SimConfig(dt=0.01, horizon=2.0, seed=9)
    ref = np.linspace(1.0, 0.2, config.n_steps + 1)
    runs = ensemble(initial_bits(2), lift, GrowthSpec.decay_only(), config, 30, reference=ref, keep_paths=True)
    expected = np.mean((runs.paths[:, 1:] - ref[1:]) ** 2, axis=1)
    np.testing.assert_allclose(runs.gaps, expected, rtol=1e-10, atol=1e-15)
    assert np.all(runs.terminal == runs.paths[:, -1])


def test_ensemble_rejects_bad_reference(case1):
    lift = build_quantile_lift(case1, 4)
    config = SimConfig(dt=0.1, horizon=1.0)
    with pytest.raises(DomainError):
        ensemble(initial_bits(4), lift, GrowthSpec.decay_only(), config, 3, reference=np.zeros(4))
    with pytest.raises(DomainError):
        ensemble(initial_bits(4), lift, GrowthSpec.decay_only(), config, 0)


def test_decay_mean_variance_at_zero(case1):
    lift = build_quantile_lift(case1, 8)
    assert decay_mean_variance(lift, 0.0) == (1.0, 0.0)
    mean, var = decay_mean_variance(lift, np.array([0.0, 1.0]))
    assert mean.shape == (2,)
    assert 0 < mean[1] < 1 and var[1] > 0


def _decay_statistics(case1, n_paths):
    lift = build_quantile_lift(case1, 256)
    config = SimConfig(dt=0.01, horizon=1.0, seed=2024)
    runs = ensemble(initial_bits(256), lift, GrowthSpec.decay_only(), config, n_paths)
    mean, var = decay_mean_variance(lift, 1.0)
    standard_error = np.sqrt(var / n_paths)
    assert abs(runs.mean[-1] - mean) <= 4 * standard_error
    assert runs.variance[-1] == pytest.approx(var, rel=0.2)


def test_decay_statistics_desk(case1):
    _decay_statistics(case1, 2000)


@pytest.mark.slow
def test_decay_statistics_full(case1):
    _decay_statistics(case1, 10_000)


def _growth_only(m, n_seeds, tol):
    lift = QuantileLift.decay_free(m)
    t_end = np.log(3.0)
    config = SimConfig(dt=t_end / 1000, horizon=t_end, seed=8)
    runs = ensemble(initial_bits(m, 0.5), lift, GrowthSpec.logistic(1.0), config, n_seeds)
    assert runs.terminal.mean() == pytest.approx(0.75, abs=tol)


def test_growth_only_limit_desk():
    _growth_only(2**12, 4, 0.03)


@pytest.mark.slow
def test_growth_only_limit_full():
    _growth_only(2**14, 8, 0.02)


def test_decay_only_paths_never_increase(case1):
    lift = build_quantile_lift(case1, 64)
    config = SimConfig(dt=0.05, horizon=5.0, seed=13)
    runs = ensemble(initial_bits(64), lift, GrowthSpec.decay_only(), config, 10, keep_paths=True)
    assert np.all(np.diff(runs.paths, axis=1) <= 0)
    assert np.all((runs.paths >= 0) & (runs.paths <= 1))


@pytest.mark.parametrize('rate', [0.05, 0.5, 3.0])
def test_single_site_survival(rate):
    n_paths = 4000
    config = SimConfig(dt=0.01, horizon=2.0, seed=31)
    runs = ensemble(initial_bits(1), QuantileLift([rate]), GrowthSpec.decay_only(), config, n_paths)
    survival = np.exp(-rate * config.horizon)
    standard_error = np.sqrt(survival * (1 - survival) / n_paths)
    assert abs(runs.mean[-1] - survival) <= 4 * standard_error


@pytest.mark.parametrize('spec', [
    GrowthSpec.logistic(1.0),
    GrowthSpec.allee(1.0, a=0.3),
    GrowthSpec.allee(2.0, schedule=TimeSchedule(a_lower=0.1, a_upper=0.5, h=1.0, theta=0.2)),
])
def test_block_thresholds_follow_the_growth_law(spec):
    times = np.arange(30) * 0.1
    expected = [spec.threshold(t) for t in times]
    np.testing.assert_allclose(micro_sim._thresholds(spec, times), expected, rtol=1e-12)


def test_step_with_schedule_stays_binary(case1):
    spec = GrowthSpec.allee(2.0, schedule=TimeSchedule(a_lower=0.1, a_upper=0.5, h=1.0, theta=0.2))
    state = MicroState.initial(build_quantile_lift(case1, 8), seed=4)
    for _ in range(30):
        state = step_micro(state, spec, 0.1)
    assert 0.0 <= aggregate(state) <= 1.0
    assert state.t == pytest.approx(3.0)


def test_few_paths_use_every_worker(case1, monkeypatch):
    sizes = []
    real = micro_sim._batches
    monkeypatch.setattr(micro_sim, '_batches', lambda seeds, size: sizes.append(size) or real(seeds, size))
    config = SimConfig(dt=0.1, horizon=1.0, seed=1)
    with parallel_backend('threading'):
        ensemble(initial_bits(4), build_quantile_lift(case1, 4), GrowthSpec.decay_only(), config, 40, workers=4)
    assert sizes == [10]
