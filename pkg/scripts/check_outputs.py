"""Inspects a run directory: manifest integrity, CSV row counts, previews and the registry."""

import sys
from pathlib import Path
from typing import Any

import duckdb
import pandas as pd
from loguru import logger

from dchar_field.config import settings
from dchar_field.utils.data_helpers import REGISTRY_NAME, verify_manifest


def check_outputs(run_dir: Path) -> bool:
    """Summarizes every CSV of ``run_dir`` with DuckDB and checks its manifest.

    Args:
        run_dir: Directory written by one ``dchar-field`` command.

    Returns:
        True when the manifest matches and every CSV carries a single config hash.
    """
    if not run_dir.exists():
        logger.error(f"❌ Run directory not found: {run_dir}")
        return False

    ok = True
    problems = verify_manifest(run_dir)
    for problem in problems:
        logger.error(f"❌ {problem}")
    ok &= not problems

    con: duckdb.DuckDBPyConnection = duckdb.connect(database=":memory:")
    logger.info(f"🔍 Inspecting {run_dir}...")
    print("-" * 50)

    for csv_path in sorted(run_dir.glob("*.csv")):
        source = f"read_csv_auto('{csv_path.as_posix()}')"
        try:
            result: tuple[Any, ...] | None = con.execute(
                f"SELECT COUNT(*), COUNT(DISTINCT config_hash) FROM {source}"
            ).fetchone()
            if result is None:
                logger.error(f"❌ Failed to fetch row count for {csv_path.name}")
                ok = False
                continue
            rows, hashes = result
            if hashes != 1:
                logger.warning(f"⚠️ {csv_path.name} mixes {hashes} config hashes")
                ok = False
            logger.success(f"✅ {csv_path.name}: {rows:,} rows found.")

            preview: pd.DataFrame = con.execute(f"SELECT * FROM {source} LIMIT 3").df()
            print(f"\nPreview for {csv_path.name}:\n{preview}\n")
            print("-" * 50)
        except Exception as e:
            logger.error(f"❌ Error reading {csv_path.name}: {e}")
            ok = False
    con.close()

    registry = run_dir / REGISTRY_NAME
    if registry.exists():
        reg = duckdb.connect(database=str(registry), read_only=True)
        try:
            runs = reg.execute("SELECT * FROM runs").df()
            print(f"\nRegistered runs:\n{runs}\n")
        finally:
            reg.close()

    logger.info("🏁 Verification complete.")
    return ok


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(settings.cli.out)
    dirs = [target] if (target / "manifest.json").exists() else sorted(target.glob("*/"))
    sys.exit(0 if all([check_outputs(d) for d in dirs]) else 1)
