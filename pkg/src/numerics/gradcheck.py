"""Central finite-difference verification of tape gradients."""

from typing import Callable, Iterable, Optional

import numpy as np

from .tape import Matrix, Node, Tape, backward

LossFn = Callable[[Tape, dict[str, Node]], Node]


def numeric_gradient(loss_fn: LossFn, params: dict[str, Matrix], name: str, h: float = 1e-5) -> Matrix:
    """dL/d(params[name]) by central differences, perturbing entries in place."""
    target = params[name]
    grad = np.zeros_like(target)

    def evaluate() -> float:
        tape = Tape(recording=False, dtype=target.dtype)
        nodes = {key: tape.leaf(value, key) for key, value in params.items()}
        return float(loss_fn(tape, nodes).value[0, 0])

    for index in np.ndindex(target.shape):
        original = target[index]
        target[index] = original + h
        upper = evaluate()
        target[index] = original - h
        lower = evaluate()
        target[index] = original
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic: Matrix, numeric: Matrix) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(
    loss_fn: LossFn,
    params: dict[str, Matrix],
    trainable: Optional[Iterable[str]] = None,
    h: float = 1e-5,
) -> dict[str, float]:
    """Max relative error between backward() and finite differences, per parameter group.

    ``params`` should be float64; the arrays are perturbed and restored in place.
    """
    names = list(trainable) if trainable is not None else list(params)
    tape = Tape(dtype=np.float64)
    nodes = {key: tape.leaf(value, key, requires_grad=key in names) for key, value in params.items()}
    analytic = backward(tape, loss_fn(tape, nodes))
    return {
        name: relative_error(analytic[name], numeric_gradient(loss_fn, params, name, h))
        for name in names
    }
