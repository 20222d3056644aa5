import numpy as np
import pytest

from benthic.core import macro_ide
from benthic.core.errors import DomainError, NumericalError
from benthic.core.growth import GrowthSpec, TimeSchedule, logistic_closed_form, solve_scalar_growth
from benthic.core.macro_ide import (
    Classification,
    MacroState,
    decay_only_solution,
    h_curve,
    h_derivative,
    h_function,
    simulate_macro,
    solve_equilibrium,
    step_macro,
)
from benthic.core.rate_measure import QuantileLift, build_quantile_lift, laplace_transform
from benthic.core.units import SimConfig, Stepper

ALLEE = GrowthSpec.allee(1.0, a=0.25)


class TestStep:
    def test_euler_decay_step(self):
        lift = QuantileLift([1.0, 2.0])
        state = MacroState(t=0.0, occupancy=[0.5, 0.5], lift=lift)
        nxt = step_macro(state, GrowthSpec.decay_only(), 0.1)
        np.testing.assert_allclose(nxt.occupancy, [0.45, 0.4])
        assert nxt.t == pytest.approx(0.1)
        assert nxt.aggregate == pytest.approx(0.425)

    def test_exponential_decay_step(self):
        lift = QuantileLift([1.0, 2.0])
        state = MacroState(t=0.0, occupancy=[0.5, 0.5], lift=lift)
        nxt = step_macro(state, GrowthSpec.decay_only(), 0.1, Stepper.EXPONENTIAL)
        np.testing.assert_allclose(nxt.occupancy, 0.5 * np.exp(-np.array([0.1, 0.2])))

    def test_exponential_keeps_frozen_nodes(self):
        state = MacroState(t=0.0, occupancy=[0.3, 0.7], lift=QuantileLift.decay_free(2))
        nxt = step_macro(state, GrowthSpec.decay_only(), 1.0, Stepper.EXPONENTIAL)
        np.testing.assert_allclose(nxt.occupancy, [0.3, 0.7])

    def test_large_rates_stay_in_range(self):
        state = MacroState(t=0.0, occupancy=[1.0, 1.0], lift=QuantileLift([50.0, 80.0]))
        nxt = step_macro(state, ALLEE, 0.1)
        assert np.all((nxt.occupancy >= 0) & (nxt.occupancy <= 1))

    def test_state_validation(self):
        lift = QuantileLift([1.0, 2.0])
        with pytest.raises(DomainError):
            MacroState(t=0.0, occupancy=[0.5], lift=lift)
        with pytest.raises(DomainError):
            MacroState(t=0.0, occupancy=[0.5, 1.2], lift=lift)
        with pytest.raises(DomainError):
            step_macro(MacroState(t=0.0, occupancy=[0.5, 0.5], lift=lift), ALLEE, 0.0)


def test_decay_only_tracks_laplace_transform(case1):
    lift = build_quantile_lift(case1, 4096)
    config = SimConfig(dt=0.001, horizon=6.0)
    path = simulate_macro(np.ones(4096), lift, GrowthSpec.decay_only(), config)
    exact = decay_only_solution(case1, path.times)
    assert np.max(np.abs(path.x - exact)) <= 5e-3
    assert decay_only_solution(case1, 1.0) == laplace_transform(case1, 1.0)


def test_growth_only_matches_logistic():
    t_end = np.log(3.0)
    config = SimConfig(dt=t_end / 2000, horizon=t_end)
    path = simulate_macro(np.full(8, 0.5), QuantileLift.decay_free(8), GrowthSpec.logistic(1.0), config)
    assert path.terminal == pytest.approx(0.75, abs=1e-3)


def test_euler_is_first_order():
    spec = GrowthSpec.logistic(1.0)
    lift = QuantileLift.decay_free(4)
    errors = []
    for dt in (0.1, 0.05, 0.025):
        path = simulate_macro(np.full(4, 0.2), lift, spec, SimConfig(dt=dt, horizon=1.0))
        errors.append(abs(path.terminal - logistic_closed_form(0.2, 1.0, 1.0)))
    assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.15)
    assert errors[1] / errors[2] == pytest.approx(2.0, rel=0.1)


def test_node_frame(case1):
    lift = build_quantile_lift(case1, 3)
    config = SimConfig(dt=0.1, horizon=0.3)
    path = simulate_macro(np.ones(3), lift, ALLEE, config, record_nodes=True)
    frame = path.node_frame()
    assert list(frame.columns) == ['t', 'R_i', 'x_hat_i']
    assert len(frame) == 4 * 3
    np.testing.assert_allclose(frame.groupby('t')['x_hat_i'].mean().to_numpy(), path.x)
    assert list(path.to_frame().columns) == ['t', 'X_hat']
    with pytest.raises(DomainError):
        simulate_macro(np.ones(3), lift, ALLEE, config).node_frame()


class TestEquilibrium:
    def test_logistic_profile_is_discrete_fixed_point(self, case1):
        spec = GrowthSpec.logistic(1.0)
        lift = build_quantile_lift(case1, 256)
        result = solve_equilibrium(case1, spec, lift)
        assert not result.extinction_only
        assert len(result.roots) == 1
        assert result.stable.classification == Classification.STABLE
        profile = np.array(result.profile)
        assert profile.mean() == pytest.approx(result.stable.x, abs=1e-9)
        nxt = step_macro(MacroState(t=0.0, occupancy=profile, lift=lift), spec, 0.01)
        assert np.max(np.abs(nxt.occupancy - profile)) <= 1e-8

    def test_allee_has_saddle_and_stable_roots(self, case1):
        result = solve_equilibrium(case1.with_eta(0.01), ALLEE)
        assert len(result.roots) == 2
        stable, saddle = result.roots
        assert stable.classification == Classification.STABLE
        assert saddle.classification == Classification.SADDLE
        assert stable.x > 0.98
        assert saddle.x == pytest.approx(0.25, abs=0.02)
        # without a lift the profile is reported on the default node set
        assert len(result.profile) == len(result.rates) == 1024

    def test_strong_decay_leaves_extinction_only(self, case1):
        result = solve_equilibrium(case1.with_eta(1000.0), ALLEE)
        assert result.extinction_only
        assert result.roots == []
        assert result.stable is None

    def test_no_growth_is_extinction_only(self, case1):
        assert solve_equilibrium(case1, GrowthSpec.decay_only()).extinction_only

    def test_scheduled_threshold_rejected(self, case1):
        schedule = TimeSchedule(a_lower=0.1, a_upper=0.5, h=720.0, theta=48.0)
        spec = GrowthSpec.allee(0.0125, schedule=schedule)
        with pytest.raises(DomainError):
            solve_equilibrium(case1, spec)
        # freezing the schedule makes it solvable
        solve_equilibrium(case1.with_eta(0.01), spec.at_time(4800.0), scan_points=500)


class TestH:
    def test_derivative_matches_finite_difference(self, case1):
        measure = case1.with_eta(0.01)
        for spec in (ALLEE, GrowthSpec.logistic(1.0)):
            for x in (0.3, 0.6, 0.9):
                step = 1e-4
                fd = (h_function(x + step, measure, spec) - h_function(x - step, measure, spec)) / (2 * step)
                assert h_derivative(x, measure, spec) == pytest.approx(fd, rel=1e-4, abs=1e-5)

    def test_curve_against_lift(self, case1):
        lift = build_quantile_lift(case1, 64)
        xs = np.array([0.2, 0.5, 1.0])
        curve = h_curve(xs, case1, GrowthSpec.logistic(1.0), lift)
        expected = [np.mean(1.0 / (lift.rates + x)) for x in xs]
        np.testing.assert_allclose(curve, expected, rtol=1e-12)

    def test_curve_without_lift_uses_measure(self, case1):
        xs = [0.4, 0.8]
        np.testing.assert_allclose(
            h_curve(xs, case1, ALLEE),
            [h_function(x, case1, ALLEE) for x in xs],
        )

    def test_domain(self, case1):
        with pytest.raises(DomainError):
            h_function(0.0, case1, ALLEE)
        with pytest.raises(DomainError):
            h_derivative(1.5, case1, ALLEE)
        with pytest.raises(DomainError):
            h_curve([0.0, 0.5], case1, ALLEE, build_quantile_lift(case1, 4))
        assert h_function(0.5, case1, GrowthSpec.decay_only()) == 0.0


class TestInvariants:
    def test_empty_state_is_fixed(self, case1):
        lift = build_quantile_lift(case1, 32)
        path = simulate_macro(np.zeros(32), lift, ALLEE, SimConfig(dt=0.1, horizon=5.0))
        np.testing.assert_array_equal(path.x, 0.0)

    def test_allee_without_decay_matches_reference(self):
        config = SimConfig(dt=0.001, horizon=5.0)
        path = simulate_macro(np.full(4, 0.6), QuantileLift.decay_free(4), ALLEE, config)
        reference = solve_scalar_growth(ALLEE, 0.6, path.times)
        assert np.max(np.abs(path.x - reference)) <= 5e-3

    def test_decay_error_halves_with_dt(self, case1):
        lift = build_quantile_lift(case1, 64)
        errors = []
        for dt in (0.004, 0.002):
            path = simulate_macro(np.ones(64), lift, GrowthSpec.decay_only(), SimConfig(dt=dt, horizon=2.0))
            exact = np.exp(-np.outer(path.times, lift.rates)).mean(axis=1)
            errors.append(np.max(np.abs(path.x - exact)))
        assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.05)

    def test_quantile_rule_within_lift_bound(self, case1):
        gaps = []
        for l in range(11):
            lift = build_quantile_lift(case1, 2**l)
            gap = abs(np.exp(-lift.rates * 1.0).mean() - laplace_transform(case1, 1.0))
            assert gap <= 1.0 / lift.m
            gaps.append(gap)
        assert gaps[-1] < gaps[4]

    def test_continuous_dependence_on_measure(self, case1):
        config = SimConfig(dt=0.05, horizon=10.0)

        def run(eta):
            return simulate_macro(np.ones(256), build_quantile_lift(case1.with_eta(eta), 256), ALLEE, config).x

        base = run(1.0)
        gaps = [np.max(np.abs(run(1.0 + eps) - base)) for eps in (0.2, 0.1, 0.05)]
        assert gaps[0] > gaps[1] > gaps[2] > 0


TIPPED = GrowthSpec.allee(0.3 / 24, a=0.1)


class TestEquilibriumRegimes:
    def test_tipped_regime_has_high_stable_root(self, case1):
        result = solve_equilibrium(case1.with_eta(0.008), TIPPED)
        assert [root.classification for root in result.roots] == [Classification.STABLE, Classification.SADDLE]
        stable, saddle = result.roots
        assert 0.70 <= stable.x <= 0.85
        assert saddle.x < stable.x
        assert all(root.residual <= 1e-6 for root in result.roots)

    def test_tipped_profile_is_discrete_fixed_point(self, case1):
        measure = case1.with_eta(0.008)
        lift = build_quantile_lift(measure, 1024)
        result = solve_equilibrium(measure, TIPPED, lift)
        assert 0.70 <= result.stable.x <= 0.85
        profile = np.array(result.profile)
        nxt = step_macro(MacroState(t=0.0, occupancy=profile, lift=lift), TIPPED, 0.024)
        assert np.max(np.abs(nxt.occupancy - profile)) <= 1e-8

    def test_high_threshold_leaves_extinction_only(self, case1):
        assert solve_equilibrium(case1.with_eta(0.008), GrowthSpec.allee(0.3 / 24, a=0.9)).extinction_only

    def test_vanishing_decay_recovers_scalar_allee_roots(self, case1):
        # a measure squeezed towards rate 0 leaves the roots a and 1 of the scalar law
        result = solve_equilibrium(case1.with_eta(1e-6), ALLEE)
        assert len(result.roots) == 2
        stable, saddle = result.roots
        assert stable.classification == Classification.STABLE
        assert stable.x == pytest.approx(1.0, abs=1e-3)
        assert saddle.classification == Classification.SADDLE
        assert saddle.x == pytest.approx(0.25, abs=1e-3)

    def test_disagreeing_h_is_an_error(self, case1, monkeypatch):
        exact = macro_ide.h_function
        monkeypatch.setattr(macro_ide, 'h_function', lambda x, measure, spec: exact(x, measure, spec) + 1e-3)
        with pytest.raises(NumericalError):
            solve_equilibrium(case1.with_eta(0.008), TIPPED)
