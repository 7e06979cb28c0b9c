"""On-device patch: a small MLP applied to the frozen region denoiser's output."""

from dataclasses import dataclass
from typing import ClassVar, Iterable

import numpy as np

from ..config import PATCH_INIT_GAIN
from ..errors import ShapeError
from ..numerics import Matrix, Node, Tape, ops


@dataclass(eq=False)
class PatchModel:
    """Personal patch: three tanh hidden layers of width d and a linear output layer."""

    user_id: int
    region_id: int
    w1: Matrix
    b1: Matrix
    w2: Matrix
    b2: Matrix
    w3: Matrix
    b3: Matrix
    w4: Matrix
    b4: Matrix

    TENSORS: ClassVar[tuple[str, ...]] = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")

    @classmethod
    def initialize(
        cls, user_id: int, region_id: int, d: int, gain: float = PATCH_INIT_GAIN, dtype=np.float32
    ) -> "PatchModel":
        """Near-identity start: ``W1 = gain*I``, ``W2 = W3 = I``, ``W4 = I/gain``, zero biases."""
        eye = np.eye(d, dtype=dtype)
        zero = np.zeros((1, d), dtype=dtype)
        return cls(
            user_id=user_id,
            region_id=region_id,
            w1=(eye * gain).astype(dtype),
            b1=zero.copy(),
            w2=eye.copy(),
            b2=zero.copy(),
            w3=eye.copy(),
            b3=zero.copy(),
            w4=(eye / gain).astype(dtype),
            b4=zero.copy(),
        )

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.w1.dtype

    @property
    def job_id(self) -> str:
        return f"{self.user_id}@{self.region_id}"

    def tensors(self) -> dict[str, Matrix]:
        return {name: getattr(self, name) for name in self.TENSORS}

    def update(self, values: dict[str, Matrix]) -> None:
        for name, value in values.items():
            if name not in self.TENSORS:
                raise KeyError(name)
            setattr(self, name, value)

    def bind(self, tape: Tape, trainable: Iterable[str] = ()) -> dict[str, Node]:
        trainable = set(trainable)
        return {name: tape.leaf(v, name, requires_grad=name in trainable) for name, v in self.tensors().items()}


def patch_denoise(nodes: dict[str, Node], x0_hat: Node) -> Node:
    """Tape-level MLP over a 1 x d row."""
    if x0_hat.cols != nodes["w1"].rows:
        raise ShapeError(f"patch expects width {nodes['w1'].rows}, got shape {x0_hat.shape}")
    h = x0_hat
    for layer in ("1", "2", "3"):
        h = ops.tanh(ops.add(ops.matmul(h, nodes["w" + layer]), nodes["b" + layer]))
    return ops.add(ops.matmul(h, nodes["w4"]), nodes["b4"])


def patch_forward(p: PatchModel, x0_hat: Matrix) -> Matrix:
    """Refine a region x0_hat row (inference mode)."""
    x = np.asarray(x0_hat)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape != (1, p.d):
        raise ShapeError(f"patch expects a 1 x {p.d} row, got shape {x.shape}")
    tape = Tape(recording=False, dtype=p.dtype)
    return patch_denoise(p.bind(tape), tape.constant(x.astype(p.dtype, copy=False))).value
