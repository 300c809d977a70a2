"""Configuration management module using Dynaconf."""

import tomllib
from pathlib import Path
from typing import Any

from dynaconf import Dynaconf

# Determine the base path of the package configuration
current_dir = Path(__file__).parent

settings = Dynaconf(
    envvar_prefix="DCHAR",
    settings_files=[current_dir / "settings.toml"],
    environments=True,
    load_dotenv=True,
)


def apply_config_file(path: Path) -> dict[str, Any]:
    """Layers a user TOML file (same sections as settings.toml) over the settings.

    Args:
        path: TOML file with ``[section]`` tables such as ``[fourier]`` or ``[noise]``.

    Returns:
        The parsed file content, so callers can fold it into the run config.
    """
    with path.open("rb") as fh:
        overrides: dict[str, Any] = tomllib.load(fh)
    for section, values in overrides.items():
        if isinstance(values, dict):
            for key, value in values.items():
                settings.set(f"{section}.{key}", value)
        else:
            settings.set(section, values)
    return overrides
