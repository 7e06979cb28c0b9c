"""Preset registry for named experiment setups."""

from pathlib import Path

from pydantic import BaseModel, Field

SYNTH_FILE = "synth.conf"
TRAIN_FILE = "train.conf"


class PresetInfo(BaseModel):
    """Metadata about a registered preset."""

    id: str = Field(description="Unique preset identifier (directory name)")
    description: str = Field(description="First comment line of synth.conf")
    synth_file: Path = Field(description="Synthetic dataset spec")
    train_file: Path | None = Field(default=None, description="Optional training overrides")


class PresetRegistry:
    """Registry for discovering the presets under ``presets/``."""

    def __init__(self, presets_dir: str | Path = Path(__file__).resolve().parent):
        self.presets_dir = Path(presets_dir)
        self._presets: dict[str, PresetInfo] = {}
        self._discover_presets()

    def _discover_presets(self) -> None:
        """Every sub-directory holding a synth.conf is a preset."""
        if not self.presets_dir.exists():
            return

        for preset_path in sorted(self.presets_dir.iterdir()):
            synth_file = preset_path / SYNTH_FILE
            if not (preset_path.is_dir() and synth_file.exists()):
                continue
            description = ""
            for line in synth_file.read_text(encoding="utf-8").splitlines():
                if line.startswith("#"):
                    description = line.lstrip("# ").strip()
                    break
            train_file = preset_path / TRAIN_FILE
            self._presets[preset_path.name] = PresetInfo(
                id=preset_path.name,
                description=description or "No description",
                synth_file=synth_file,
                train_file=train_file if train_file.exists() else None,
            )

    def get_available_presets(self) -> list[PresetInfo]:
        return list(self._presets.values())

    def get_preset(self, preset_id: str) -> PresetInfo | None:
        return self._presets.get(preset_id)
