import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

OUTPUT_DIR = Path(os.environ.get("BENTHIC_OUTPUT_DIR", "results"))

# fixed float format keeps reruns byte-identical across platforms
FLOAT_FORMAT = "%.10g"


def _ensure_dir(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    _ensure_dir(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"wrote {len(frame)} rows to {path}")
    return path


def write_json(payload: Union[BaseModel, Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    _ensure_dir(path)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
    logger.info(f"wrote {path}")
    return path


def load_json(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())
