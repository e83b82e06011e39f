import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))

from semopt.schema import load_schema  # noqa: E402


def model_sources(directory: Path) -> list[tuple[str, str]]:
    return [(str(p), p.read_text(encoding="utf-8")) for p in sorted(directory.glob("*.rb"))]


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def redmine():
    base = FIXTURES / "redmine"
    return load_schema(base / "schema.json"), model_sources(base / "models"), (base / "queries.log").read_text().splitlines()


@pytest.fixture
def app():
    base = FIXTURES / "app"
    return load_schema(base / "schema.json"), model_sources(base / "models")
