import numpy as np
import pytest

from src.denoisers import (
    PatchModel,
    TrainingExample,
    ce_loss,
    ce_loss_node,
    global_denoise,
    global_forward,
    holdout_examples,
    patch_denoise,
    patch_forward,
    region_denoise,
    region_forward,
    relation_deltas,
    sample_negatives,
    sliding_examples,
    spatiotemporal_matrix,
    step_embedding,
)
from src.errors import LossError, ModelInputError, ShapeError
from src.numerics import Rng, check_gradients, ops
from tests.factories import global_model, grid_pois, region_model, visits


class TestStepEmbedding:
    def test_values(self):
        e = step_embedding(0, 6)
        np.testing.assert_array_equal(e, [[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]])
        e = step_embedding(3, 4)
        np.testing.assert_allclose(e, [[np.sin(3.0), np.cos(3.0), np.sin(0.03), np.cos(0.03)]])

    def test_odd_width(self):
        assert step_embedding(5, 5).shape == (1, 5)

    def test_shared_and_read_only(self):
        e = step_embedding(7, 8)
        assert e is step_embedding(7, 8)
        with pytest.raises(ValueError):
            e[0, 0] = 1.0

    def test_negative_step(self):
        with pytest.raises(ValueError):
            step_embedding(-1, 4)


class TestGlobalModel:
    def test_initialize(self):
        m = global_model(categories=4, d=6)
        assert m.category_emb.shape == (4, 6)
        assert m.w_q.shape == m.w_k.shape == m.w_v.shape == (6, 6)
        assert m.dtype == np.float32
        assert m.rows([3, 0]) == [3, 0]

    def test_ids_are_sorted(self):
        from src.denoisers import GlobalModel

        m = GlobalModel.initialize([30, 10, 20], 4, Rng(0))
        assert m.category_ids == [10, 20, 30]
        assert m.rows([30]) == [2]

    def test_forward_shape_and_determinism(self):
        m = global_model(d=8)
        x = np.full((1, 8), 0.1, dtype=np.float32)
        out = global_forward(m, x, [0, 2, 1], 5)
        assert out.shape == (1, 8)
        np.testing.assert_array_equal(out, global_forward(m, x, [0, 2, 1], 5))

    def test_bad_inputs(self):
        m = global_model(d=8)
        x = np.zeros((1, 8), dtype=np.float32)
        with pytest.raises(ModelInputError):
            global_forward(m, x, [], 3)
        with pytest.raises(ModelInputError):
            global_forward(m, x, [99], 3)
        with pytest.raises(ModelInputError):
            global_forward(m, np.zeros((1, 5)), [0], 3)

    def test_copy_is_independent(self):
        m = global_model()
        clone = m.copy()
        clone.w_v[0, 0] += 1.0
        assert m.w_v[0, 0] != clone.w_v[0, 0]


class TestRegionModel:
    def test_initialize_from_categories(self):
        pois = grid_pois(7, categories=3)
        m = region_model(pois, d=4)
        np.testing.assert_array_equal(m.poi_emb, m.base.category_emb[[p.category_id for p in pois]])
        np.testing.assert_array_equal(m.unit_spatial, np.zeros((1, 4)))
        np.testing.assert_array_equal(m.unit_temporal, np.zeros((1, 4)))
        assert list(m.tensors()) == [
            "base.category_emb", "base.w_q", "base.w_k", "base.w_v", "poi_emb", "unit_spatial", "unit_temporal",
        ]

    def test_poi_outside_region(self):
        pois = grid_pois(5)
        m = region_model(pois)
        with pytest.raises(ModelInputError):
            m.rows([42])
        with pytest.raises(ModelInputError):
            region_forward(m, np.zeros((1, 8)), visits(grid_pois(50), [40]), 1)

    def test_forward_shape(self):
        pois = grid_pois(6)
        m = region_model(pois, d=8)
        out = region_forward(m, np.zeros((1, 8), dtype=np.float32), visits(pois, [0, 3, 5]), 4)
        assert out.shape == (1, 8)

    def test_update_rejects_frozen_tensor(self):
        m = region_model(grid_pois(4))
        with pytest.raises(KeyError):
            m.update({"base.w_q": np.zeros((8, 8))})


class TestRelations:
    def test_deltas(self):
        pois = grid_pois(6)
        history = visits(pois, [0, 1, 5], gap_s=1800)
        spatial, temporal = relation_deltas(history)
        assert spatial.shape == temporal.shape == (3, 3)
        np.testing.assert_array_equal(np.diag(spatial), 0.0)
        np.testing.assert_allclose(spatial, spatial.T)
        assert spatial[0, 1] == pytest.approx(1.112, rel=1e-3)
        np.testing.assert_allclose(temporal, [[0.0, 0.5, 1.0], [0.5, 0.0, 0.5], [1.0, 0.5, 0.0]])

    def test_clipping(self):
        far = grid_pois(1) + grid_pois(1, lat=42.7)
        far[1] = far[1].model_copy(update={"id": 1})
        history = visits(far, [0, 1], gap_s=400 * 3600)
        spatial, temporal = relation_deltas(history, spatial_clip_km=100.0, temporal_clip_h=168.0)
        assert spatial[0, 1] == 100.0
        assert temporal[0, 1] == 168.0

    def test_spatiotemporal_matrix(self):
        pois = grid_pois(3)
        history = visits(pois, [0, 1], gap_s=7200)
        unit_s = np.array([[0.5, 0.5]])
        unit_t = np.array([[0.25, -1.0]])
        spatial, temporal = relation_deltas(history)
        expected = spatial * 1.0 + temporal * -0.75
        np.testing.assert_allclose(spatiotemporal_matrix(history, unit_s, unit_t), expected)


class TestPatch:
    def test_near_identity_at_initialization(self):
        p = PatchModel.initialize(1, 0, 8, gain=0.05, dtype=np.float64)
        x = np.random.default_rng(0).normal(size=(1, 8)) * 0.1
        np.testing.assert_allclose(patch_forward(p, x), x, rtol=1e-3, atol=1e-6)

    def test_job_id(self):
        assert PatchModel.initialize(12, 3, 4).job_id == "12@3"

    def test_wrong_width(self):
        p = PatchModel.initialize(1, 0, 8)
        with pytest.raises(ShapeError):
            patch_forward(p, np.zeros((1, 6)))
        with pytest.raises(ShapeError):
            patch_forward(p, np.zeros((2, 8)))

    def test_flat_vector_accepted(self):
        p = PatchModel.initialize(1, 0, 4)
        assert patch_forward(p, np.zeros(4)).shape == (1, 4)


def _perturbed(tensors, scale, seed):
    rng = np.random.default_rng(seed)
    return {name: value + scale * rng.normal(size=value.shape) for name, value in tensors.items()}


class TestGradients:
    """Tape gradients of the full denoising loss against central differences (float64, d=8, M=5)."""

    D = 8

    def _fixed_inputs(self, seed):
        rng = np.random.default_rng(seed)
        x_t = rng.normal(size=(1, self.D))
        return x_t

    def test_global_parameters(self):
        m = global_model(categories=6, d=self.D, dtype=np.float64, init_scale=0.5, dropout=0.0)
        history = [0, 3, 1, 5, 2]
        x_t = self._fixed_inputs(0)

        def loss_fn(tape, nodes):
            x0 = ops.gather_rows(nodes["category_emb"], [4])
            x0_hat = global_denoise(m, nodes, history, tape.constant(x_t), 7)
            return ce_loss_node(x0_hat, x0, ops.gather_rows(nodes["category_emb"], [0, 2, 5]))

        params = {name: value.copy() for name, value in m.tensors().items()}
        errors = check_gradients(loss_fn, params)
        assert max(errors.values()) < 1e-4, errors

    def test_region_parameters(self):
        pois = grid_pois(10, categories=4)
        m = region_model(pois, d=self.D, dtype=np.float64)
        m.base.lam = 0.3
        params = {name: value.copy() for name, value in m.tensors().items()}
        params.update(_perturbed(m.trainable_tensors(), 0.05, 1))
        history = visits(pois, [0, 4, 7, 2, 9], gap_s=5400)
        deltas = m.relation_deltas(history)
        x_t = self._fixed_inputs(1)

        def loss_fn(tape, nodes):
            x0 = ops.gather_rows(nodes["poi_emb"], [6])
            x0_hat = region_denoise(m, nodes, history, tape.constant(x_t), 11, None, deltas)
            return ce_loss_node(x0_hat, x0, ops.gather_rows(nodes["poi_emb"], [1, 3, 8]), "bce")

        errors = check_gradients(loss_fn, params, trainable=m.TRAINABLE)
        assert set(errors) == {"poi_emb", "unit_spatial", "unit_temporal"}
        assert max(errors.values()) < 1e-4, errors

    def test_patch_parameters(self):
        pois = grid_pois(10, categories=4)
        m = region_model(pois, d=self.D, dtype=np.float64)
        patch = PatchModel.initialize(0, 0, self.D, gain=0.5, dtype=np.float64)
        params = {name: value.copy() for name, value in m.tensors().items()}
        params.update(_perturbed(patch.tensors(), 0.05, 2))
        history = visits(pois, [1, 5, 2, 8, 3])
        x_t = self._fixed_inputs(2)

        def loss_fn(tape, nodes):
            x0 = ops.gather_rows(nodes["poi_emb"], [0])
            x0_hat = patch_denoise(nodes, region_denoise(m, nodes, history, tape.constant(x_t), 3))
            return ce_loss_node(x0_hat, x0, ops.gather_rows(nodes["poi_emb"], [4, 9]))

        errors = check_gradients(loss_fn, params, trainable=PatchModel.TENSORS)
        assert set(errors) == set(PatchModel.TENSORS)
        assert max(errors.values()) < 1e-4, errors


class TestLoss:
    def test_printed_form(self):
        x0_hat = np.array([0.5, -1.0])
        x0 = np.array([1.0, 0.5])
        negatives = np.array([[0.2, 0.3], [-1.0, 1.0]])
        log_sig = lambda v: -np.log1p(np.exp(-v))  # noqa: E731
        expected = -(log_sig(x0_hat @ x0) - np.mean(log_sig(negatives @ x0_hat)))
        assert ce_loss(x0_hat, x0, negatives) == pytest.approx(expected, rel=1e-12)

    def test_bce_form(self):
        x0_hat = np.array([0.5, -1.0])
        x0 = np.array([1.0, 0.5])
        negatives = np.array([[0.2, 0.3], [-1.0, 1.0]])
        log_sig = lambda v: -np.log1p(np.exp(-v))  # noqa: E731
        expected = -log_sig(x0_hat @ x0) - np.mean(log_sig(-(negatives @ x0_hat)))
        assert ce_loss(x0_hat, x0, negatives, "bce") == pytest.approx(expected, rel=1e-12)

    def test_bce_prefers_separated_negatives(self):
        x0 = np.array([1.0, 0.0])
        good = ce_loss(x0, x0, [[-1.0, 0.0]], "bce")
        bad = ce_loss(x0, x0, [[1.0, 0.0]], "bce")
        assert good < bad

    def test_errors(self):
        with pytest.raises(LossError):
            ce_loss([1.0], [1.0], [])
        with pytest.raises(LossError):
            ce_loss([1.0], [1.0], [[1.0]], "hinge")

    def test_negatives_skip_the_target(self):
        rows = sample_negatives(Rng(0), 5, 2, 2000)
        assert rows.min() >= 0 and rows.max() <= 4
        assert 2 not in set(rows.tolist())
        assert set(rows.tolist()) == {0, 1, 3, 4}

    def test_negative_sampling_errors(self):
        with pytest.raises(LossError):
            sample_negatives(Rng(0), 1, 0, 3)
        with pytest.raises(LossError):
            sample_negatives(Rng(0), 5, 0, 0)


class TestExamples:
    def test_sliding_window(self):
        examples = sliding_examples([1, 2, 3, 4], max_history=2)
        assert examples == [
            TrainingExample((1,), 2),
            TrainingExample((1, 2), 3),
            TrainingExample((2, 3), 4),
        ]

    def test_short_sequences(self):
        assert sliding_examples([7]) == []
        with pytest.raises(ValueError):
            sliding_examples([1, 2], max_history=0)

    def test_holdout_keeps_last_pair(self):
        train, val = holdout_examples([[1, 2, 3], [4, 5]], max_history=5)
        assert val == [TrainingExample((1, 2), 3)]
        assert train == [TrainingExample((1,), 2), TrainingExample((4,), 5)]
