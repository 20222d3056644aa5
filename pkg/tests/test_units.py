import numpy as np
import pytest

from benthic.core.errors import DomainError
from benthic.core.units import (
    SimConfig,
    TimeUnit,
    from_hours,
    parse_duration,
    parse_rate,
    rate_from_per_hour,
    to_hours,
)


def test_parse_duration_suffixes():
    assert parse_duration('6h') == 6.0
    assert parse_duration('0.001d') == pytest.approx(0.024)
    assert parse_duration('30 days') == 720.0
    assert parse_duration('2d') == 48.0
    assert parse_duration('1.5') == 1.5  # bare number is hours


def test_parse_rate_suffixes():
    assert parse_rate('0.3/d') == pytest.approx(0.0125)
    assert parse_rate('0.0125/h') == pytest.approx(0.0125)
    assert parse_rate('1.431 per hour') == pytest.approx(1.431)


def test_unit_round_trip():
    assert from_hours(to_hours(3.0, TimeUnit.DAY), TimeUnit.DAY) == pytest.approx(3.0)
    assert rate_from_per_hour(parse_rate('0.3/d'), 'd') == pytest.approx(0.3)


@pytest.mark.parametrize('bad', ['abc', '6 weeks', '1h2', ''])
def test_parse_duration_rejects(bad):
    with pytest.raises(DomainError):
        parse_duration(bad)


def test_parse_without_default_unit_needs_suffix():
    with pytest.raises(DomainError):
        parse_duration('5', default_unit=None)


class TestSimConfig:
    def test_steps_and_times(self):
        config = SimConfig(dt=0.024, horizon=168.0)
        assert config.n_steps == 7000
        times = config.times()
        assert times.size == 7001
        assert times[-1] == pytest.approx(168.0)

    def test_max_steps_caps(self):
        config = SimConfig(dt=0.1, horizon=1.0, max_steps=0)
        assert config.n_steps == 0
        np.testing.assert_array_equal(config.times(), [0.0])

    def test_from_units(self):
        config = SimConfig.from_units('0.001d', '200d')
        assert config.dt == pytest.approx(0.024)
        assert config.horizon == pytest.approx(4800.0)

    def test_with_seed(self):
        config = SimConfig(dt=0.1, horizon=1.0)
        assert config.with_seed(9).seed == 9
        assert config.seed == 0

    @pytest.mark.parametrize('kwargs', [
        {'dt': 0.0, 'horizon': 1.0},
        {'dt': 0.5, 'horizon': 0.1},
        {'dt': 0.1, 'horizon': 1.0, 'seed': -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)
