"""Flat ``key = value`` settings files and the text report layouts.

Presets, ``--config`` files and resolved run configs all use the same flat
format: one ``key = value`` per line, ``#`` starts a comment.

Usage:
    from src.text_loader import load_key_values, format_key_values, render_template

    settings = load_key_values("presets/small/synth.conf")
    Path("resolved.conf").write_text(format_key_values(settings))
    text = render_template("metrics_report.txt", table=table)
"""

from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, Union

from .errors import ConfigError

TEMPLATES_DIR = Path(__file__).resolve().parent / "templates"


def parse_key_values(text: str, source: str = "<text>") -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and comments are skipped.

    Raises:
        ConfigError: On a line without ``=``, an empty key, or a repeated key.
    """
    settings: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{number}: empty key")
        if key in settings:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        settings[key] = value
    return settings


def load_key_values(filepath: Union[str, Path]) -> dict[str, str]:
    """Read a settings file such as a preset's ``synth.conf`` or ``train.conf``."""
    path = Path(filepath)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_key_values(path.read_text(encoding="utf-8"), source=str(path))


def format_key_values(settings: Mapping[str, Any]) -> str:
    """Inverse of ``parse_key_values``: ``None`` values are left out, booleans are lower-case."""
    lines = []
    for key, value in settings.items():
        if value is None:
            continue
        lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"


@lru_cache(maxsize=None)
def _layout(name: str) -> str:
    path = TEMPLATES_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"no report template named {name!r} in {TEMPLATES_DIR}")
    return path.read_text(encoding="utf-8").strip()


def render_template(name: str, **fields: Any) -> str:
    """Fill the report layout ``src/templates/<name>``."""
    return _layout(name).format(**fields)
