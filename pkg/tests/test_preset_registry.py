from presets.preset_registry import PresetRegistry
from src.config import PRESETS_DIR
from src.data import SynthSpec


class TestPresetRegistry:
    def test_bundled_presets(self):
        registry = PresetRegistry(PRESETS_DIR)
        ids = {p.id for p in registry.get_available_presets()}
        assert {"small", "cyclic", "markov"} <= ids
        for preset in registry.get_available_presets():
            assert preset.description and preset.description != "No description"
            assert preset.train_file is not None and preset.train_file.exists()
            SynthSpec.from_file(preset.synth_file)

    def test_unknown_preset(self):
        assert PresetRegistry(PRESETS_DIR).get_preset("nope") is None

    def test_discovery(self, tmp_path):
        (tmp_path / "alpha").mkdir()
        (tmp_path / "alpha" / "synth.conf").write_text("# Alpha world\nusers = 2\npois = 2\ncategories = 1\n")
        (tmp_path / "bare").mkdir()
        (tmp_path / "bare" / "synth.conf").write_text("users = 2\npois = 2\ncategories = 1\n")
        (tmp_path / "empty").mkdir()
        (tmp_path / "notes.txt").write_text("not a preset")

        registry = PresetRegistry(tmp_path)
        assert [p.id for p in registry.get_available_presets()] == ["alpha", "bare"]
        alpha = registry.get_preset("alpha")
        assert alpha.description == "Alpha world"
        assert alpha.train_file is None
        assert registry.get_preset("bare").description == "No description"

    def test_missing_directory(self, tmp_path):
        assert PresetRegistry(tmp_path / "absent").get_available_presets() == []
