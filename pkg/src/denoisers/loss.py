"""Sampled-negative cross-entropy between x0_hat and the target embedding."""

from typing import Literal, Sequence

import numpy as np

from ..errors import LossError
from ..numerics import Matrix, Node, Rng, Tape, ops

LossForm = Literal["printed", "bce"]


def ce_loss_node(x0_hat: Node, x0: Node, negatives: Node, form: LossForm = "printed") -> Node:
    """Loss for one example; ``negatives`` is an n x d block of negative embeddings.

    ``printed``: ``-(log s(x0_hat.x0) - mean log s(x0_hat.e_n))``.
    ``bce``: ``-log s(x0_hat.x0) - mean log s(-x0_hat.e_n)``.
    """
    if negatives.rows == 0:
        raise LossError("at least one negative is required")
    positive = ops.log_sigmoid(ops.dot(x0_hat, x0))
    scores = ops.matmul(negatives, ops.transpose(x0_hat))
    if form == "printed":
        return ops.sub(ops.mean(ops.log_sigmoid(scores)), positive)
    if form == "bce":
        return ops.sub(ops.scale(ops.mean(ops.log_sigmoid(ops.scale(scores, -1.0))), -1.0), positive)
    raise LossError(f"unknown loss form {form!r}")


def ce_loss(x0_hat, x0, negatives: Sequence, form: LossForm = "printed") -> float:
    """Value-only loss for plain vectors."""
    neg = np.asarray(negatives, dtype=np.float64)
    if neg.size == 0:
        raise LossError("at least one negative is required")
    tape = Tape(recording=False)
    return float(ce_loss_node(
        tape.constant(np.asarray(x0_hat, dtype=np.float64).reshape(1, -1)),
        tape.constant(np.asarray(x0, dtype=np.float64).reshape(1, -1)),
        tape.constant(neg.reshape(len(neg), -1)),
        form,
    ).value[0, 0])


def sample_negatives(rng: Rng, vocab_size: int, target_row: int, count: int) -> Matrix:
    """``count`` rows drawn uniformly from ``[0, vocab_size)`` minus ``target_row``."""
    if vocab_size < 2:
        raise LossError("negative sampling needs a vocabulary of at least two items")
    if count < 1:
        raise LossError(f"negative count must be positive, got {count}")
    draws = np.asarray(rng.integers(0, vocab_size - 1, size=count), dtype=np.int64)
    return draws + (draws >= target_row)
