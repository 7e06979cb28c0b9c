"""Primitive matrix ops with their vector-Jacobian products.

Every op takes ``Node`` operands from one tape and returns a new ``Node``.
Vectors are 1 x d row matrices; scalars are 1 x 1.
"""

from typing import Sequence

import numpy as np

from ..errors import ShapeError
from .rng import Rng
from .tape import Matrix, Node


def _same_shape(op: str, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _unbroadcast(grad: Matrix, shape: tuple[int, int]) -> Matrix:
    if grad.shape == shape:
        return grad
    return grad.sum(axis=0, keepdims=True)


def matmul(a: Node, b: Node) -> Node:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return a.tape.record(
        "matmul", av @ bv, (a, b),
        lambda g: (g @ bv.T, av.T @ g),
    )


def add(a: Node, b: Node) -> Node:
    """Elementwise sum; ``b`` may also be a single row added to every row of ``a``."""
    if a.shape != b.shape and not (b.rows == 1 and b.cols == a.cols):
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    b_shape = b.shape
    return a.tape.record(
        "add", a.value + b.value, (a, b),
        lambda g: (g, _unbroadcast(g, b_shape)),
    )


def sub(a: Node, b: Node) -> Node:
    _same_shape("sub", a, b)
    return a.tape.record("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Node, b: Node) -> Node:
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return a.tape.record("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Node, factor: float) -> Node:
    return a.tape.record("scale", a.value * factor, (a,), lambda g: (g * factor,))


def scale_by(a: Node, s: Node) -> Node:
    """Multiply matrix ``a`` by the 1 x 1 node ``s``."""
    if s.shape != (1, 1):
        raise ShapeError(f"scale_by: factor must be 1x1, got {s.shape}")
    av, sv = a.value, s.value[0, 0]
    return a.tape.record(
        "scale_by", av * sv, (a, s),
        lambda g: (g * sv, np.array([[np.sum(g * av)]], dtype=av.dtype)),
    )


def transpose(a: Node) -> Node:
    return a.tape.record("transpose", a.value.T.copy(), (a,), lambda g: (g.T,))


def row_softmax(a: Node) -> Node:
    """Softmax over each row, computed with max-subtraction."""
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)

    def vjp(g: Matrix):
        return (probs * (g - np.sum(g * probs, axis=1, keepdims=True)),)

    return a.tape.record("row_softmax", probs, (a,), vjp)


def dropout(a: Node, rate: float, rng: Rng | None) -> Node:
    """Inverted dropout; identity when ``rate`` is 0 or no rng is given."""
    if rate <= 0.0 or rng is None:
        return a
    keep = (rng.uniform(a.shape) >= rate).astype(a.value.dtype) / (1.0 - rate)
    return a.tape.record("dropout", a.value * keep, (a,), lambda g: (g * keep,))


def column_sum(a: Node) -> Node:
    """Sum over rows, giving a 1 x cols row."""
    rows = a.rows
    return a.tape.record(
        "column_sum", a.value.sum(axis=0, keepdims=True), (a,),
        lambda g: (np.repeat(g, rows, axis=0),),
    )


def total_sum(a: Node) -> Node:
    shape = a.shape
    return a.tape.record(
        "total_sum", a.value.sum().reshape(1, 1), (a,),
        lambda g: (np.full(shape, g[0, 0], dtype=a.value.dtype),),
    )


def mean(a: Node) -> Node:
    return scale(total_sum(a), 1.0 / a.value.size)


def gather_rows(table: Node, indices: Sequence[int]) -> Node:
    """Embedding lookup: rows of ``table`` in the given order."""
    idx = np.asarray(indices, dtype=np.int64)
    shape = table.shape

    def vjp(g: Matrix):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return table.tape.record("gather_rows", table.value[idx], (table,), vjp)


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)
    return a.tape.record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def log_sigmoid(a: Node) -> Node:
    x = a.value
    return a.tape.record(
        "log_sigmoid", -np.logaddexp(0.0, -x), (a,),
        lambda g: (g * np.exp(-np.logaddexp(0.0, x)),),
    )


def dot(a: Node, b: Node) -> Node:
    """Inner product of two 1 x d rows as a 1 x 1 node."""
    _same_shape("dot", a, b)
    if a.rows != 1:
        raise ShapeError(f"dot: expected row vectors, got {a.shape}")
    av, bv = a.value, b.value
    return a.tape.record(
        "dot", av @ bv.T, (a, b),
        lambda g: (g[0, 0] * bv, g[0, 0] * av),
    )


def stack_mean(nodes: Sequence[Node]) -> Node:
    """Mean of equally shaped nodes (minibatch loss)."""
    if not nodes:
        raise ValueError("stack_mean needs at least one node")
    total = nodes[0]
    for node in nodes[1:]:
        total = add(total, node)
    return scale(total, 1.0 / len(nodes))
