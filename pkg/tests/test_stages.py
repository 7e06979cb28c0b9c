import numpy as np
import pytest

from src.data.models import DeviceSequence, RegionData
from src.denoisers import GlobalModel, RegionModel
from src.errors import EmptyDatasetError, FreezeViolationError, StageError
from src.numerics import Rng, ops
from src.orchestration import (
    TrainConfig,
    TrainResult,
    device_examples,
    personalize_device,
    scratch_base,
    specialize_region,
    tensor_hash,
    train_global,
    train_loop,
)
from tests.factories import grid_pois, visits


@pytest.fixture
def trained_global(tiny_splits, tiny_cfg) -> GlobalModel:
    model, _ = train_global(tiny_splits.global_sequences, tiny_splits.categories, tiny_cfg, Rng(1))
    return model


def first_region(splits) -> RegionData:
    return splits.regions[min(splits.regions)]


class TestGlobalStage:
    def test_deterministic(self, tiny_splits, tiny_cfg):
        a, report_a = train_global(tiny_splits.global_sequences, tiny_splits.categories, tiny_cfg, Rng(1))
        b, report_b = train_global(tiny_splits.global_sequences, tiny_splits.categories, tiny_cfg, Rng(1))
        assert tensor_hash(a.tensors()) == tensor_hash(b.tensors())
        assert report_a.train_loss == report_b.train_loss
        assert report_a.val_accuracy == report_b.val_accuracy

    def test_report(self, tiny_splits, tiny_cfg):
        _, report = train_global(tiny_splits.global_sequences, tiny_splits.categories, tiny_cfg, Rng(1))
        assert report.stage == "global"
        assert report.init == "random"
        assert report.epochs_run == 2
        assert len(report.train_loss) == len(report.val_loss) == 2
        assert 0 < report.val_examples <= len(tiny_splits.global_sequences)
        assert 0.0 <= report.val_accuracy <= 1.0

    def test_zero_epochs_keeps_initialization(self, tiny_splits, tiny_cfg):
        cfg = tiny_cfg.model_copy(update={"max_epochs": 0})
        model, report = train_global(tiny_splits.global_sequences, tiny_splits.categories, cfg, Rng(5))
        expected = GlobalModel.initialize(
            tiny_splits.categories, cfg.d, Rng(5).derive("init"),
            lam=cfg.lam, dropout=cfg.dropout, init_scale=cfg.init_scale, dtype=cfg.np_dtype,
        )
        assert tensor_hash(model.tensors()) == tensor_hash(expected.tensors())
        assert report.epochs_run == 0

    def test_empty_dataset(self, tiny_cfg):
        with pytest.raises(EmptyDatasetError):
            train_global([], [0, 1], tiny_cfg, Rng(0))


class TestRegionStage:
    def test_base_stays_frozen(self, tiny_splits, tiny_cfg, trained_global):
        before = tensor_hash(trained_global.tensors())
        region = first_region(tiny_splits)
        model, report = specialize_region(trained_global, region, tiny_cfg, Rng(2))
        assert tensor_hash(trained_global.tensors()) == before
        assert report.freeze_audit.passed
        assert report.freeze_audit.frozen == "global"
        assert report.init == "pretrained"
        assert model.base is trained_global
        initial = RegionModel.initialize(trained_global, region.region_id, region.pois)
        assert not np.array_equal(model.poi_emb, initial.poi_emb)

    def test_loads_a_checkpoint_path(self, tiny_splits, tiny_cfg, trained_global, tmp_path):
        from src.orchestration import save_checkpoint

        path = save_checkpoint(trained_global, tmp_path / "global.ckpt")
        region = first_region(tiny_splits)
        from_path, _ = specialize_region(path, region, tiny_cfg, Rng(2))
        from_model, _ = specialize_region(trained_global, region, tiny_cfg, Rng(2))
        assert tensor_hash(from_path.tensors()) == tensor_hash(from_model.tensors())

    def test_scratch_mode(self, tiny_splits, tiny_cfg):
        region = first_region(tiny_splits)
        model, report = specialize_region(None, region, tiny_cfg, Rng(2), scratch=True, categories=tiny_splits.categories)
        assert report.init == "scratch"
        assert tensor_hash(model.base.tensors()) == tensor_hash(scratch_base(tiny_splits.categories, tiny_cfg).tensors())

    def test_pretrained_mode_needs_a_global_model(self, tiny_splits, tiny_cfg):
        with pytest.raises(StageError):
            specialize_region(None, first_region(tiny_splits), tiny_cfg, Rng(2))

    def test_empty_region(self, tiny_cfg, trained_global):
        region = RegionData(region_id=9, pois=grid_pois(4, region_id=9))
        with pytest.raises(EmptyDatasetError):
            specialize_region(trained_global, region, tiny_cfg, Rng(0))

    def test_modified_base_is_caught(self, tiny_splits, tiny_cfg, trained_global, monkeypatch):
        def tampering_loop(stage, job_id, tensors, trainable, *args, **kwargs):
            tensors["base.w_v"][0, 0] += 1.0
            return TrainResult(params={name: tensors[name].copy() for name in trainable})

        monkeypatch.setattr("src.orchestration.stages.train_loop", tampering_loop)
        with pytest.raises(FreezeViolationError) as info:
            specialize_region(trained_global, first_region(tiny_splits), tiny_cfg, Rng(2))
        audit = info.value.report.freeze_audit
        assert audit is not None and not audit.passed


class TestDeviceStage:
    @pytest.fixture
    def region_model(self, tiny_splits, tiny_cfg, trained_global) -> RegionModel:
        model, _ = specialize_region(trained_global, first_region(tiny_splits), tiny_cfg, Rng(2))
        return model

    def test_region_stays_frozen(self, tiny_splits, tiny_cfg, region_model):
        seq = first_region(tiny_splits).device_sequences[0]
        before = tensor_hash(region_model.tensors())
        patch, report = personalize_device(region_model, seq, tiny_cfg, Rng(4))
        assert tensor_hash(region_model.tensors()) == before
        assert report.freeze_audit.passed
        assert report.freeze_audit.frozen == "region"
        assert (patch.user_id, patch.region_id) == (seq.user_id, seq.region_id)
        assert patch.d == region_model.d

    def test_short_sequence_is_skipped(self, tiny_cfg, region_model):
        pois = [p for p in grid_pois(40) if p.id in set(region_model.poi_ids)]
        seq = DeviceSequence(user_id=99, region_id=region_model.region_id, visits=visits(pois, [p.id for p in pois[:3]]))
        patch, report = personalize_device(region_model, seq, tiny_cfg, Rng(4))
        assert patch is None
        assert report.skipped

    def test_device_examples(self):
        pois = grid_pois(6)
        seq = DeviceSequence(user_id=1, region_id=0, visits=visits(pois, [0, 1, 2, 3, 4, 5]))
        train, val = device_examples(seq, max_history=2)
        assert [ex.target.poi_id for ex in train] == [1, 2, 3]
        assert [v.poi_id for v in val[0].history] == [2, 3]
        assert val[0].target.poi_id == 4


class TestTrainLoop:
    CFG = TrainConfig(max_epochs=10, patience=2, batch_size=2, optimizer="sgd", eta=0.1, dtype="float64")

    def test_divergence_becomes_stage_error(self):
        def exploding(tape, nodes, ex, rng, training):
            return ops.scale(ops.total_sum(nodes["a"]), float("inf"))

        report = object()
        with pytest.raises(StageError) as info:
            train_loop("global", "cloud", {"a": np.ones((1, 2))}, ["a"], exploding, [0, 1], [], self.CFG, Rng(0), None, report)
        assert info.value.report is report

    def test_early_stopping(self):
        def flat(tape, nodes, ex, rng, training):
            return ops.scale(ops.total_sum(nodes["a"]), 0.0)

        result = train_loop("global", "cloud", {"a": np.ones((1, 2))}, ["a"], flat, [0, 1, 2], [3], self.CFG, Rng(0))
        assert result.epochs_run == 3
        assert result.best_epoch == 1

    def test_inputs_are_not_modified(self):
        a = np.array([[1.0, -2.0]])
        frozen = np.array([[3.0]])

        def quadratic(tape, nodes, ex, rng, training):
            return ops.add(ops.total_sum(ops.mul(nodes["a"], nodes["a"])), ops.total_sum(nodes["frozen"]))

        result = train_loop(
            "global", "cloud", {"a": a, "frozen": frozen}, ["a"], quadratic, [0, 1], [], self.CFG, Rng(0),
        )
        np.testing.assert_array_equal(a, [[1.0, -2.0]])
        assert set(result.params) == {"a"}
        assert np.abs(result.params["a"]).max() < 1.0
        assert result.train_loss == sorted(result.train_loss, reverse=True)
