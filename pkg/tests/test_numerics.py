import numpy as np
import pytest

from src.errors import LossError, NonFiniteError, ShapeError
from src.numerics import Rng, Tape, backward, check_gradients, derive_seed, ops, sample_gaussian


class TestTape:
    def test_matmul_gradient(self):
        tape = Tape()
        x = tape.constant([[1.0, 2.0], [3.0, 4.0]])
        w = tape.leaf(np.array([[0.5], [-1.0]]), "w", requires_grad=True)
        grads = backward(tape, ops.total_sum(ops.matmul(x, w)))
        np.testing.assert_allclose(grads["w"], [[4.0], [6.0]])

    def test_reused_node_accumulates(self):
        tape = Tape()
        a = tape.leaf(np.array([[1.5, -2.0]]), "a", requires_grad=True)
        grads = backward(tape, ops.total_sum(ops.mul(a, a)))
        np.testing.assert_allclose(grads["a"], [[3.0, -4.0]])

    def test_unreachable_parameter_gets_zero_gradient(self):
        tape = Tape()
        a = tape.leaf(np.ones((1, 2)), "a", requires_grad=True)
        tape.leaf(np.ones((2, 2)), "unused", requires_grad=True)
        grads = backward(tape, ops.total_sum(a))
        np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))

    def test_loss_must_be_scalar(self):
        tape = Tape()
        a = tape.leaf(np.ones((1, 2)), "a", requires_grad=True)
        with pytest.raises(LossError):
            backward(tape, ops.scale(a, 2.0))

    def test_loss_from_another_tape(self):
        other = Tape()
        loss = ops.total_sum(other.leaf(np.ones((1, 1)), "a", requires_grad=True))
        with pytest.raises(LossError):
            backward(Tape(), loss)

    def test_non_finite_values_raise(self):
        tape = Tape()
        a = tape.leaf(np.ones((1, 1)), "a", requires_grad=True)
        with pytest.raises(NonFiniteError):
            ops.scale(a, float("inf"))

    def test_inference_tape_keeps_no_graph(self):
        tape = Tape(recording=False)
        a = tape.leaf(np.ones((2, 2)), "a", requires_grad=True)
        out = ops.tanh(ops.matmul(a, a))
        assert tape.nodes == []
        assert not out.requires_grad
        np.testing.assert_allclose(out.value, np.tanh(2.0 * np.ones((2, 2))))

    def test_shape_errors(self):
        tape = Tape()
        a = tape.constant(np.ones((2, 3)))
        b = tape.constant(np.ones((2, 3)))
        with pytest.raises(ShapeError):
            ops.matmul(a, b)
        with pytest.raises(ShapeError):
            ops.add(a, tape.constant(np.ones((1, 2))))
        with pytest.raises(ShapeError):
            ops.dot(a, b)
        with pytest.raises(ShapeError):
            ops.scale_by(a, b)


class TestOps:
    def test_row_softmax_is_stable(self):
        tape = Tape()
        probs = ops.row_softmax(tape.constant([[1000.0, 1000.0], [0.0, -1000.0]])).value
        np.testing.assert_allclose(probs.sum(axis=1), [1.0, 1.0])
        np.testing.assert_allclose(probs[0], [0.5, 0.5])

    def test_log_sigmoid_extremes(self):
        tape = Tape()
        out = ops.log_sigmoid(tape.constant([[-1000.0, 0.0, 1000.0]])).value
        np.testing.assert_allclose(out, [[-1000.0, np.log(0.5), 0.0]], atol=1e-12)

    def test_gather_rows_scatters_duplicates(self):
        tape = Tape()
        table = tape.leaf(np.arange(6.0).reshape(3, 2), "table", requires_grad=True)
        picked = ops.gather_rows(table, [2, 0, 2])
        np.testing.assert_array_equal(picked.value, [[4.0, 5.0], [0.0, 1.0], [4.0, 5.0]])
        grads = backward(tape, ops.total_sum(picked))
        np.testing.assert_array_equal(grads["table"], [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])

    def test_add_broadcasts_a_row(self):
        tape = Tape()
        a = tape.leaf(np.zeros((3, 2)), "a", requires_grad=True)
        b = tape.leaf(np.array([[1.0, 2.0]]), "b", requires_grad=True)
        out = ops.add(a, b)
        np.testing.assert_array_equal(out.value, np.tile([1.0, 2.0], (3, 1)))
        grads = backward(tape, ops.total_sum(out))
        np.testing.assert_array_equal(grads["b"], [[3.0, 3.0]])

    def test_dropout(self):
        tape = Tape()
        a = tape.constant(np.ones((50, 50)))
        assert ops.dropout(a, 0.5, None) is a
        assert ops.dropout(a, 0.0, Rng(0)) is a
        dropped = ops.dropout(a, 0.5, Rng(0)).value
        assert set(np.unique(dropped)) <= {0.0, 2.0}
        assert 0.4 < (dropped == 0.0).mean() < 0.6

    def test_stack_mean(self):
        tape = Tape()
        out = ops.stack_mean([tape.constant([[1.0]]), tape.constant([[3.0]])])
        assert out.value[0, 0] == pytest.approx(2.0)
        with pytest.raises(ValueError):
            ops.stack_mean([])


class TestGradientCheck:
    def test_composite_function(self):
        rng = np.random.default_rng(0)
        params = {
            "a": rng.normal(size=(3, 4)),
            "w": rng.normal(size=(4, 4)) * 0.5,
            "v": rng.normal(size=(1, 4)),
            "s": np.array([[0.3]]),
        }

        def loss_fn(tape, nodes):
            h = ops.tanh(ops.matmul(nodes["a"], nodes["w"]))
            probs = ops.row_softmax(ops.scale_by(ops.matmul(h, ops.transpose(h)), nodes["s"]))
            pooled = ops.column_sum(ops.matmul(probs, h))
            return ops.sub(ops.log_sigmoid(ops.dot(pooled, nodes["v"])), ops.mean(ops.gather_rows(nodes["a"], [0, 2])))

        errors = check_gradients(loss_fn, params)
        assert set(errors) == set(params)
        assert max(errors.values()) < 1e-6

    def test_only_trainable_groups_are_checked(self):
        params = {"a": np.ones((1, 2)), "b": np.full((1, 2), 2.0)}
        errors = check_gradients(lambda tape, n: ops.dot(n["a"], n["b"]), params, trainable=["a"])
        assert list(errors) == ["a"]
        np.testing.assert_array_equal(params["a"], np.ones((1, 2)))


class TestRng:
    def test_same_seed_same_stream(self):
        a, b = Rng(42), Rng(42)
        np.testing.assert_array_equal(a.normal(7), b.normal(7))
        np.testing.assert_array_equal(a.uniform(5), b.uniform(5))
        np.testing.assert_array_equal(a.integers(0, 100, size=10), b.integers(0, 100, size=10))

    def test_derived_streams_are_independent_of_parent_position(self):
        parent = Rng(5)
        first = parent.derive("region", 3).normal(4)
        parent.normal(100)
        np.testing.assert_array_equal(parent.derive("region", 3).normal(4), first)
        assert not np.array_equal(parent.derive("region", 4).normal(4), first)

    def test_derive_seed_is_stable(self):
        assert derive_seed(7, "device", "3@1") == derive_seed(7, "device", "3@1")
        assert derive_seed(7, "device", "3@1") != derive_seed(7, "device", "1@3")
        assert 0 <= derive_seed(0) < 2**64

    def test_normal_moments(self):
        z = Rng(1).normal(200_001)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01

    def test_sample_gaussian_shape_and_dtype(self):
        out = sample_gaussian(Rng(0), 3, 5, dtype=np.float32)
        assert out.shape == (3, 5)
        assert out.dtype == np.float32

    def test_choice_without_replacement(self):
        picks = Rng(0).choice(10, 10, replace=False)
        assert sorted(picks.tolist()) == list(range(10))

    def test_shuffled_keeps_items(self):
        items = list("abcdef")
        assert sorted(Rng(9).shuffled(items)) == items
