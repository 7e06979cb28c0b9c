"""Reverse-mode gradient recording over dense 2-D matrices.

A ``Tape`` owns every ``Node`` created while it records. Nodes are appended
in creation order, which is a topological order of the computation, so the
backward pass is a single reverse sweep over ``tape.nodes``.

Usage:
    tape = Tape()
    w = tape.leaf(weights, "w", requires_grad=True)
    loss = ops.total_sum(ops.matmul(x, w))
    grads = backward(tape, loss)  # {"w": dL/dw}
"""

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import LossError, NonFiniteError

Matrix = np.ndarray
"""Row-major dense 2-D float array. All values finite."""

VJP = Callable[[Matrix], Sequence[Optional[Matrix]]]


def as_matrix(values, dtype=np.float64) -> Matrix:
    """Coerce scalars, vectors, and nested lists to a contiguous 2-D matrix."""
    array = np.asarray(values, dtype=dtype)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(1, -1)
    elif array.ndim > 2:
        raise ValueError(f"expected at most 2 dimensions, got shape {array.shape}")
    return np.ascontiguousarray(array)


class Node:
    """One value on the tape plus how to route its gradient to its parents."""

    __slots__ = ("tape", "value", "parents", "vjp", "requires_grad", "name", "index")

    def __init__(
        self,
        tape: "Tape",
        value: Matrix,
        parents: tuple["Node", ...] = (),
        vjp: Optional[VJP] = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ) -> None:
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name
        self.index = -1

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def __repr__(self) -> str:
        label = self.name or "node"
        return f"Node({label}, shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the functional forms live in ops.
    def __add__(self, other: "Node") -> "Node":
        from .ops import add
        return add(self, other)

    def __sub__(self, other: "Node") -> "Node":
        from .ops import sub
        return sub(self, other)

    def __matmul__(self, other: "Node") -> "Node":
        from .ops import matmul
        return matmul(self, other)

    def __mul__(self, factor: float) -> "Node":
        from .ops import scale
        return scale(self, factor)

    __rmul__ = __mul__

    def __neg__(self) -> "Node":
        from .ops import scale
        return scale(self, -1.0)


class Tape:
    """Ordered record of primitive ops for one job.

    A tape with ``recording=False`` still evaluates every op (and still
    enforces finiteness) but keeps no graph, which is how inference runs.
    """

    def __init__(self, recording: bool = True, dtype=np.float64) -> None:
        self.recording = recording
        self.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []

    def _append(self, node: Node) -> Node:
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def leaf(self, value, name: Optional[str] = None, requires_grad: bool = False) -> Node:
        """Wrap an array as an input node. Parameters pass ``requires_grad=True``."""
        matrix = value if isinstance(value, np.ndarray) and value.ndim == 2 else as_matrix(value, self.dtype)
        node = Node(self, matrix, requires_grad=requires_grad and self.recording, name=name)
        if node.requires_grad:
            self._append(node)
        return node

    def constant(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def record(self, op: str, value: Matrix, parents: Iterable[Node], vjp: VJP) -> Node:
        """Register the output of a primitive op."""
        if not np.isfinite(value).all():
            raise NonFiniteError(f"{op} produced non-finite values")
        parents = tuple(parents)
        if self.recording and any(p.requires_grad for p in parents):
            return self._append(Node(self, value, parents, vjp, requires_grad=True, name=op))
        return Node(self, value, name=op)

    @property
    def parameters(self) -> list[Node]:
        return [n for n in self.nodes if n.vjp is None and n.requires_grad]


def backward(tape: Tape, loss: Node) -> dict[str, Matrix]:
    """Fill gradient buffers for every parameter leaf reachable from ``loss``.

    Returns a map from leaf name (or ``#<index>`` for unnamed leaves) to
    dL/dleaf. Parameters the loss does not depend on get a zero gradient.
    """
    if loss.shape != (1, 1):
        raise LossError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
    if loss.tape is not tape:
        raise LossError("loss was not recorded on this tape")

    buffers: dict[int, Matrix] = {}
    if loss.requires_grad:
        buffers[loss.index] = np.ones_like(loss.value)

    gradients: dict[str, Matrix] = {}
    for node in reversed(tape.nodes):
        grad = buffers.pop(node.index, None)
        if node.vjp is None:
            key = node.name or f"#{node.index}"
            gradients[key] = grad if grad is not None else np.zeros_like(node.value)
            continue
        if grad is None:
            continue
        for parent, parent_grad in zip(node.parents, node.vjp(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent.index in buffers:
                buffers[parent.index] = buffers[parent.index] + parent_grad
            else:
                buffers[parent.index] = parent_grad
    return gradients
