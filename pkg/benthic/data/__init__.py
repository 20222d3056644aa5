from importlib import resources
from pathlib import Path

FIXTURES = ("tableA1.csv", "tableA2.csv")


def fixture_path(name: str) -> Path:
    """Path of a shipped covering-ratio table."""
    if name not in FIXTURES:
        raise FileNotFoundError(f"no shipped dataset named '{name}' (have {', '.join(FIXTURES)})")
    return Path(str(resources.files(__name__).joinpath(name)))
