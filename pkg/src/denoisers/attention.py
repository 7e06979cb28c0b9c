"""Single-head self-attention pooled into one output row."""

import math
from typing import Optional

from ..numerics import Node, Rng, ops


def attend(
    z: Node,
    w_q: Node,
    w_k: Node,
    w_v: Node,
    relation: Optional[Node] = None,
    dropout: float = 0.0,
    rng: Optional[Rng] = None,
) -> Node:
    """``column_sum(softmax((Q K^T + relation) / sqrt(d)) V)`` for the M x d input ``z``.

    Dropout hits the attention probabilities and is only active when ``rng``
    is given (training).
    """
    q = ops.matmul(z, w_q)
    k = ops.matmul(z, w_k)
    v = ops.matmul(z, w_v)
    logits = ops.matmul(q, ops.transpose(k))
    if relation is not None:
        logits = ops.add(logits, relation)
    probs = ops.row_softmax(ops.scale(logits, 1.0 / math.sqrt(z.cols)))
    probs = ops.dropout(probs, dropout, rng)
    return ops.column_sum(ops.matmul(probs, v))
