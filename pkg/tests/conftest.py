import sys
from pathlib import Path

import pytest

# Ensure the repository root is on sys.path so tests can import `benthic` directly.
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from benthic.core.rate_measure import RateMeasure  # noqa: E402


@pytest.fixture
def case1():
    return RateMeasure(alpha=0.2946, beta=1.431)


@pytest.fixture
def case2():
    return RateMeasure(alpha=0.2103, beta=0.8881)
