"""Run bookkeeping: config hashing, CSV/JSON writers, manifests and the run registry."""

import hashlib
import json
from pathlib import Path
from typing import Any

import duckdb
import pandas as pd
import pandera.pandas as pa
from loguru import logger

from dchar_field import __version__

MANIFEST_NAME = "manifest.json"
REGISTRY_NAME = "runs.duckdb"

# run options that never change results
HASH_EXCLUDED = frozenset({"threads", "out", "log_level", "verify_manifest"})


def canonical_json(data: Any) -> str:
    """Compact JSON with sorted keys, the form that gets hashed."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(config: dict[str, Any]) -> str:
    """SHA-256 of the canonical config, ignoring options in ``HASH_EXCLUDED``."""
    relevant = {k: v for k, v in config.items() if k not in HASH_EXCLUDED}
    return hashlib.sha256(canonical_json(relevant).encode()).hexdigest()


def file_sha256(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_csv(
    frame: pd.DataFrame, path: Path, schema: type[pa.DataFrameModel], run_hash: str
) -> Path:
    """Stamps the run columns, validates against ``schema`` and writes with LF endings.

    Raises:
        pandera.errors.SchemaError: If the frame does not match the schema.
    """
    stamped = frame.assign(config_hash=run_hash, version=__version__)
    validated = schema.validate(stamped)
    path.parent.mkdir(parents=True, exist_ok=True)
    validated.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"✅ Wrote {len(validated):,} rows to {path.name}")
    return path


def write_json(data: dict[str, Any], path: Path, run_hash: str) -> Path:
    """Writes UTF-8 JSON (sorted keys, 2-space indent, trailing LF) with run stamps."""
    payload = {**data, "config_hash": run_hash, "version": __version__}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    logger.info(f"✅ Wrote {path.name}")
    return path


def write_manifest(out_dir: Path, command: str, config: dict[str, Any], files: list[Path]) -> Path:
    """Writes ``manifest.json`` with the config, its hash and the output digests."""
    run_hash = config_hash(config)
    manifest = {
        "command": command,
        "config": {k: v for k, v in config.items() if k not in HASH_EXCLUDED},
        "config_hash": run_hash,
        "version": __version__,
        "files": {p.name: file_sha256(p) for p in sorted(files)},
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def verify_manifest(out_dir: Path) -> list[str]:
    """Recomputes the config hash and every file digest of a run directory.

    Returns:
        Human-readable mismatches; empty when the directory is intact.
    """
    path = out_dir / MANIFEST_NAME
    if not path.exists():
        return [f"no {MANIFEST_NAME} in {out_dir}"]
    manifest = json.loads(path.read_text(encoding="utf-8"))
    problems = []
    if config_hash(manifest["config"]) != manifest["config_hash"]:
        problems.append("config_hash does not match the recorded config")
    for name, digest in manifest["files"].items():
        target = out_dir / name
        if not target.exists():
            problems.append(f"{name} is missing")
        elif file_sha256(target) != digest:
            problems.append(f"{name} differs from its recorded digest")
    return problems


def register_run(out_dir: Path, command: str, run_hash: str, n_files: int) -> int:
    """Records the run in ``runs.duckdb``; re-running the same config adds nothing.

    Returns:
        Number of distinct runs in the registry.
    """
    con = duckdb.connect(database=str(out_dir / REGISTRY_NAME))
    try:
        con.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
                config_hash VARCHAR, command VARCHAR, version VARCHAR, n_files INTEGER
            )
            """
        )
        # Anti-join insert keeps the registry idempotent
        con.execute(
            """
            INSERT INTO runs
            SELECT source.* FROM (SELECT ? AS config_hash, ? AS command, ? AS version,
                                         ? AS n_files) AS source
            LEFT JOIN runs AS target
              ON source.config_hash = target.config_hash AND source.command = target.command
            WHERE target.config_hash IS NULL
            """,
            [run_hash, command, __version__, n_files],
        )
        result = con.execute("SELECT count(*) FROM runs").fetchone()
        return int(result[0]) if result else 0
    finally:
        con.close()
