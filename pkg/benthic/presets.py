"""Named parameterizations of the published experiments.

All rates are per hour and all durations in hours; `sources` records the
values as they were quoted, with their original units.
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .core.errors import DomainError
from .core.growth import GrowthSpec, TimeSchedule
from .core.rate_measure import RateMeasure
from .core.units import parse_duration, parse_rate

R_GROWTH = parse_rate("0.3/d")  # 0.0125 per hour
DT_DAY = parse_duration("0.001d")  # 0.024 h

CASE1 = RateMeasure(alpha=0.2946, beta=1.431)
CASE2 = RateMeasure(alpha=0.2103, beta=0.8881)

SCHEDULE = TimeSchedule(a_lower=0.1, a_upper=0.5, h=parse_duration("30d"), theta=parse_duration("2d"))


class Preset(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    description: str
    measure: RateMeasure
    growth: GrowthSpec
    dt: float = Field(gt=0)
    horizon: float = Field(gt=0)
    m: int = Field(default=256, ge=1)
    n_paths: int = Field(default=1, ge=1)
    n_seeds: int = Field(default=16, ge=1)
    l_range: Tuple[int, int] = (1, 12)
    etas: List[float] = Field(default_factory=lambda: [1.0])
    hist_etas: List[float] = Field(default_factory=list)
    hist_ms: List[int] = Field(default_factory=list)
    sources: Dict[str, str] = Field(default_factory=dict)


PRESETS: Dict[str, Preset] = {
    "case1": Preset(
        name="case1",
        description="Experiment case 1: gamma law fitted to the first flume run",
        measure=CASE1,
        growth=GrowthSpec.decay_only(),
        dt=0.001,
        horizon=6.0,
        m=4096,
        sources={"alpha": "0.2946", "beta": "1.431 (1/hour)"},
    ),
    "case2": Preset(
        name="case2",
        description="Experiment case 2: gamma law fitted to the second flume run",
        measure=CASE2,
        growth=GrowthSpec.decay_only(),
        dt=0.001,
        horizon=6.0,
        m=4096,
        sources={"alpha": "0.2103", "beta": "0.8881 (1/hour)"},
    ),
    "sec3.2": Preset(
        name="sec3.2",
        description="Micro-macro convergence study with constant Allee growth",
        measure=CASE1,
        growth=GrowthSpec.allee(R_GROWTH, a=0.25),
        dt=DT_DAY,
        horizon=7000 * DT_DAY,
        m=256,
        n_seeds=16,
        l_range=(1, 12),
        sources={"r": "0.3/24 (1/hour)", "a": "0.25", "dt": "0.001 (day)", "steps": "7000", "measure": "case 1"},
    ),
    "sec3.3": Preset(
        name="sec3.3",
        description="Rate-induced tipping under a sigmoid Allee threshold",
        measure=CASE1,
        growth=GrowthSpec.allee(R_GROWTH, schedule=SCHEDULE),
        dt=DT_DAY,
        horizon=parse_duration("200d"),
        m=128,
        n_paths=2000,
        etas=[1.0, 0.0094, 0.0093],
        hist_etas=[0.005, 0.008, 0.0093, 0.0094, 0.010, 0.020],
        hist_ms=[128, 256, 512, 1024],
        sources={
            "r": "0.3/24 (1/hour)", "a_lower": "0.1", "a_upper": "0.5", "h": "30 (day)",
            "theta": "2 (day)", "horizon": "200 (day)", "dt": "0.001 (day)", "measure": "case 1",
        },
    ),
}


def get_preset(name: Optional[str]) -> Optional[Preset]:
    if name is None:
        return None
    try:
        return PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})") from None
