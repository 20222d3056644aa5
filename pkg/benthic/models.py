from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from .core.growth import GrowthSpec
from .core.rate_measure import RateMeasure
from .core.units import SimConfig, TimeUnit

# how r enters the rates: both hazards and the IDE carry r explicitly
RATE_CONVENTION = "G(x) = r x (1 - x) (g+(x) - g-(x)); up hazard r X g+(X), down hazard r (1 - X) g-(X) + R_i"


class RunConfig(BaseModel):
    command: str
    preset: Optional[str] = None
    measure: Optional[RateMeasure] = None
    growth: Optional[GrowthSpec] = None
    sim: Optional[SimConfig] = None
    m: Optional[int] = Field(default=None, ge=1)
    n_paths: Optional[int] = Field(default=None, ge=1)
    workers: int = Field(default=1, ge=1)
    input_path: Optional[Path] = None
    output_dir: Path = Path("results")
    time_unit: TimeUnit = TimeUnit.HOUR
    rate_convention: str = RATE_CONVENTION
    extra: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("input_path")
    @classmethod
    def _input_exists(cls, v: Optional[Path]):
        if v is not None and not Path(v).is_file():
            raise ValueError(f"input file '{v}' does not exist")
        return v


class RunRecord(BaseModel):
    """JSON metadata written next to every run's data files."""

    config: RunConfig
    outputs: List[str] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)
    version: str = ""

    def to_payload(self) -> Dict[str, Any]:
        # workers never affect results; keep it out so reruns compare byte-equal
        payload = self.model_dump(mode="json", exclude={"config": {"workers", "output_dir"}})
        return payload
