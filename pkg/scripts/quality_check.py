"""Local QA gate: format, lint, types, security scan and the test suite.

Usage: ``uv run python scripts/quality_check.py [--all] [--audit]``

``--all`` includes the slow Monte Carlo and calibration tests; ``--audit`` adds
pip-audit, which needs network access.
"""

import subprocess
import sys
from dataclasses import dataclass

from loguru import logger


@dataclass(frozen=True)
class Check:
    """One QA tool invocation."""

    name: str
    command: list[str]


def build_checks(argv: list[str]) -> list[Check]:
    """Checks to run for the given script flags."""
    marker = [] if "--all" in argv else ["-m", "not slow"]
    checks = [
        Check("Ruff format", ["ruff", "format", "--check", "src", "tests", "scripts"]),
        Check("Ruff lint", ["ruff", "check", "src", "tests", "scripts"]),
        Check("Mypy", ["mypy", "src"]),
        Check("Bandit", ["bandit", "-q", "-r", "src"]),
        Check("Pytest", ["pytest", *marker]),
    ]
    if "--audit" in argv:
        checks.append(Check("pip-audit", ["pip-audit"]))
    return checks


def run_check(check: Check) -> bool:
    """Runs one check; a missing tool counts as a failure."""
    logger.info(f"🔎 {check.name}: {' '.join(check.command)}")
    try:
        code = subprocess.run(check.command, check=False).returncode
    except FileNotFoundError:
        logger.error(f"❌ {check.command[0]} is not installed (run `uv sync`).")
        return False
    if code:
        logger.error(f"❌ {check.name} exited with {code}.")
        return False
    logger.success(f"✅ {check.name}")
    return True


def main() -> None:
    """Runs every check, then exits 1 if any failed."""
    failed = [c.name for c in build_checks(sys.argv[1:]) if not run_check(c)]
    if failed:
        logger.warning(f"⚠️ Failed: {', '.join(failed)}")
        sys.exit(1)
    logger.success("✨ All checks passed.")


if __name__ == "__main__":
    main()
