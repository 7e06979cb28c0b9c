"""Resolved run configuration.

Settings are layered, later layers win:

    field defaults
    < preset train.conf (when --synth names a preset)
    < --config file
    < .env file and DCPR_<KEY> environment variables
    < command-line flags

Keys match field names case-insensitively (``DCPR_T_R`` sets ``T_R``).
Unknown keys at any layer are errors.
"""

import logging
import os
from pathlib import Path
from typing import Any, Literal, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import Field, ValidationError

from .config import (
    ENABLE_LOGGING,
    ENV_PREFIX,
    MAX_SEQUENCE_LENGTH,
    MIN_INTERACTIONS,
    MIN_SEQUENCE_LENGTH,
    NUM_REGIONS,
    OUTPUT_DIR,
    REGION_FRACTION,
)
from .errors import ConfigError
from .orchestration.train_config import TrainConfig
from .text_loader import format_key_values, load_key_values

logger = logging.getLogger(__name__)


class RunConfig(TrainConfig):
    """Every TrainConfig field plus data, output, and execution settings."""

    mode: Literal["dcpr", "dcpr_t"] = Field(default="dcpr", description="dcpr_t trains regions from scratch")
    out: str = Field(default=OUTPUT_DIR, description="Output directory")
    checkins: Optional[str] = Field(default=None, description="Check-in CSV")
    synth: Optional[str] = Field(default=None, description="Synthetic preset name or synth.conf path")
    jobs: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1, description="Worker processes")
    num_regions: int = Field(default=NUM_REGIONS, ge=1, description="k for the k-means partition")
    region_fraction: float = Field(default=REGION_FRACTION, gt=0.0, lt=1.0)
    max_seq_len: int = Field(default=MAX_SEQUENCE_LENGTH, ge=3)
    min_interactions: int = Field(default=MIN_INTERACTIONS, ge=1)
    min_sequence_length: int = Field(default=MIN_SEQUENCE_LENGTH, ge=3)
    enable_logging: bool = ENABLE_LOGGING
    progress: bool = True

    def as_key_values(self) -> str:
        """The configuration as a flat ``key = value`` file (readable by ``--config``)."""
        return format_key_values(self.model_dump(mode="json"))


_CANONICAL = {name.lower(): name for name in RunConfig.model_fields}


def _canonical(key: str, source: str) -> str:
    name = _CANONICAL.get(key.strip().lower())
    if name is None:
        raise ConfigError(f"{source}: unknown config key {key!r}")
    return name


def _layer(values: Mapping[str, Any], source: str) -> dict[str, Any]:
    return {_canonical(key, source): value for key, value in values.items()}


def env_overrides(environ: Mapping[str, str], dotenv_path: Optional[Union[str, Path]] = ".env") -> dict[str, Any]:
    """``DCPR_*`` settings from a ``.env`` file, overridden by the real environment."""
    merged: dict[str, str] = {}
    if dotenv_path is not None and Path(dotenv_path).exists():
        merged.update({k: v for k, v in dotenv_values(dotenv_path).items() if v is not None})
    merged.update(environ)
    picked = {k[len(ENV_PREFIX):]: v for k, v in merged.items() if k.upper().startswith(ENV_PREFIX)}
    return _layer(picked, "environment")


def resolve_run_config(
    config_file: Optional[Union[str, Path]] = None,
    preset_train: Optional[Union[str, Path]] = None,
    flags: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
    dotenv_path: Optional[Union[str, Path]] = ".env",
) -> RunConfig:
    """Merge every configuration layer into one validated RunConfig.

    Raises:
        FileNotFoundError: If ``config_file`` or ``preset_train`` is missing.
        ConfigError: On unknown keys or invalid values.
    """
    merged: dict[str, Any] = {}
    if preset_train is not None:
        merged.update(_layer(load_key_values(preset_train), str(preset_train)))
    if config_file is not None:
        merged.update(_layer(load_key_values(config_file), str(config_file)))
    merged.update(env_overrides(os.environ if environ is None else environ, dotenv_path))
    merged.update(_layer({k: v for k, v in (flags or {}).items() if v is not None}, "command line"))
    try:
        cfg = RunConfig(**merged)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"{location}: {first['msg']}") from None
    logger.debug("Resolved config: %s", cfg.model_dump(mode="json"))
    return cfg
