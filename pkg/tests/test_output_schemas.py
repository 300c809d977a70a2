"""Golden example outputs stay in step with the pandera schemas."""

from pathlib import Path

import pandas as pd
import pandera.errors
import pytest

from dchar_field.utils.output_schemas import SCHEMA_MAP


def test_every_schema_has_a_fixture(fixtures_dir: Path) -> None:
    """One golden CSV per output table, and no strays."""
    assert {p.stem for p in fixtures_dir.glob("*.csv")} == set(SCHEMA_MAP)


@pytest.mark.parametrize("name", sorted(SCHEMA_MAP))
def test_fixture_matches_schema(fixtures_dir: Path, name: str) -> None:
    """Each golden CSV validates against its schema."""
    frame = pd.read_csv(fixtures_dir / f"{name}.csv", dtype={"version": str})
    validated = SCHEMA_MAP[name].validate(frame)
    assert len(validated) == len(frame)


def test_schema_rejects_foreign_hash(fixtures_dir: Path) -> None:
    """The run hash must be 64 lowercase hex digits."""
    frame = pd.read_csv(fixtures_dir / "admissibility.csv", dtype={"version": str})
    with pytest.raises(pandera.errors.SchemaError):
        SCHEMA_MAP["admissibility"].validate(frame.assign(config_hash="not-a-hash"))
