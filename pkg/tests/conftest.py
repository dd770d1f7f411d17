from pathlib import Path

import pytest

from kpshap import (
    Grouping,
    SyntheticModelConfig,
    default_schema,
    read_delta_csv,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def coco():
    """(schema, skeleton) for the built-in 17-keypoint human layout."""
    return default_schema()


@pytest.fixture(scope="session")
def schema(coco):
    return coco[0]


@pytest.fixture(scope="session")
def skeleton(coco):
    return coco[1]


@pytest.fixture(scope="session")
def table2_delta(schema):
    return read_delta_csv(FIXTURES / "table2.csv", schema)


@pytest.fixture(scope="session")
def expected_grouping(schema) -> Grouping:
    return Grouping.from_json(FIXTURES / "expected_groups.json", schema)


@pytest.fixture(scope="session")
def synthetic_config() -> SyntheticModelConfig:
    return SyntheticModelConfig.from_json(FIXTURES / "synthetic17.json")
