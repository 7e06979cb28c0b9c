import numpy as np
import pytest

from src.denoisers import GlobalModel, PatchModel, RegionModel
from src.errors import (
    CheckpointFormatError,
    CheckpointHashError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from src.orchestration import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    patch_file,
    read_checkpoint,
    region_file,
    save_checkpoint,
)
from tests.factories import global_model, grid_pois, region_model


def assert_same_tensors(a, b):
    assert list(a.tensors()) == list(b.tensors())
    for name, value in a.tensors().items():
        np.testing.assert_array_equal(b.tensors()[name], value, err_msg=name)


@pytest.fixture
def trained_region() -> RegionModel:
    m = region_model(grid_pois(7, region_id=2), d=4)
    m.update({"unit_spatial": np.full((1, 4), 0.25, dtype=np.float32)})
    return m


class TestRoundTrip:
    def test_global(self, tmp_path):
        m = global_model(categories=5, d=6)
        path = save_checkpoint(m, tmp_path / "global.ckpt", config={"T": 64})
        loaded = load_checkpoint(path, expected_kind="global")
        assert isinstance(loaded, GlobalModel)
        assert loaded.category_ids == m.category_ids
        assert loaded.lam == pytest.approx(m.lam)
        assert_same_tensors(m, loaded)
        assert read_checkpoint(path).config == {"T": 64}

    def test_region(self, tmp_path, trained_region):
        path = save_checkpoint(trained_region, tmp_path / region_file(2))
        loaded = load_checkpoint(path, expected_kind="region")
        assert isinstance(loaded, RegionModel)
        assert loaded.region_id == 2
        assert loaded.poi_ids == trained_region.poi_ids
        assert loaded.poi_categories == trained_region.poi_categories
        np.testing.assert_array_equal(loaded.poi_coords, trained_region.poi_coords)
        assert loaded.gamma_cat == pytest.approx(trained_region.gamma_cat)
        assert_same_tensors(trained_region, loaded)

    def test_patch(self, tmp_path):
        p = PatchModel.initialize(7, 1, 4)
        path = save_checkpoint(p, tmp_path / patch_file(p.job_id))
        assert path.name == "patch_7@1.ckpt"
        loaded = load_checkpoint(path, expected_kind="patch")
        assert (loaded.user_id, loaded.region_id) == (7, 1)
        assert_same_tensors(p, loaded)

    def test_float64_models_keep_their_dtype(self):
        m = global_model(dtype=np.float64)
        loaded = decode_checkpoint(encode_checkpoint(m))
        assert set(loaded.tensors) == set(GlobalModel.TENSORS)
        from src.orchestration import model_from_checkpoint

        restored = model_from_checkpoint(loaded)
        assert restored.dtype == np.float64
        np.testing.assert_allclose(restored.w_q, m.w_q, rtol=1e-6)

    def test_encoding_is_deterministic(self, trained_region):
        assert encode_checkpoint(trained_region, {"seed": 1}) == encode_checkpoint(trained_region, {"seed": 1})

    def test_no_temporary_file_left(self, tmp_path):
        save_checkpoint(global_model(), tmp_path / "global.ckpt")
        assert [p.name for p in tmp_path.iterdir()] == ["global.ckpt"]


class TestCorruption:
    @pytest.fixture
    def data(self) -> bytes:
        return encode_checkpoint(global_model(categories=3, d=4))

    def test_flipped_byte(self, data):
        corrupted = bytearray(data)
        corrupted[-40] ^= 0xFF
        with pytest.raises(CheckpointHashError):
            decode_checkpoint(bytes(corrupted))

    def test_truncated(self, data):
        with pytest.raises(CheckpointTruncatedError):
            decode_checkpoint(data[:-10])
        with pytest.raises(CheckpointTruncatedError):
            decode_checkpoint(data[:20])

    def test_bad_magic(self, data):
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(b"NOPE" + data[4:])

    def test_unsupported_version(self, data):
        with pytest.raises(CheckpointVersionError):
            decode_checkpoint(data[:4] + (99).to_bytes(2, "little") + data[6:])

    def test_unknown_kind(self, data):
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(data[:6] + bytes([9]) + data[7:])

    def test_wrong_expected_kind(self, tmp_path):
        path = save_checkpoint(PatchModel.initialize(0, 0, 4), tmp_path / "patch.ckpt")
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path, expected_kind="region")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.ckpt")
