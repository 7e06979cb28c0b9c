"""Cloud-tier category denoiser.

Each history position ``m`` becomes ``z_m = e_{c_m} + lam * (x_t + e_t)``;
single-head attention over the positions is pooled by a column sum into the
clean-target estimate ``x0_hat``.
"""

from dataclasses import dataclass, field
from typing import ClassVar, Iterable, Optional, Sequence

import numpy as np

from ..config import DROPOUT, INIT_SCALE, NOISE_WEIGHT
from ..errors import ModelInputError
from ..numerics import Matrix, Node, Rng, Tape, ops
from .attention import attend
from .embeddings import step_embedding


@dataclass(eq=False)
class GlobalModel:
    """Global model: category embeddings plus the attention projections."""

    category_ids: list[int]
    category_emb: Matrix
    w_q: Matrix
    w_k: Matrix
    w_v: Matrix
    lam: float = NOISE_WEIGHT
    dropout: float = DROPOUT
    _index: dict[int, int] = field(init=False, repr=False, compare=False)

    TENSORS: ClassVar[tuple[str, ...]] = ("category_emb", "w_q", "w_k", "w_v")

    def __post_init__(self) -> None:
        if self.category_emb.shape[0] != len(self.category_ids):
            raise ModelInputError(
                f"category_emb has {self.category_emb.shape[0]} rows for {len(self.category_ids)} categories"
            )
        self._index = {cid: row for row, cid in enumerate(self.category_ids)}

    @classmethod
    def initialize(
        cls,
        category_ids: Sequence[int],
        d: int,
        rng: Rng,
        lam: float = NOISE_WEIGHT,
        dropout: float = DROPOUT,
        init_scale: float = INIT_SCALE,
        dtype=np.float32,
    ) -> "GlobalModel":
        """Embeddings ~ N(0, init_scale^2); projections ~ N(0, 1/d)."""
        ids = sorted(int(c) for c in category_ids)
        if not ids:
            raise ModelInputError("at least one category is required")
        emb = rng.derive("category_emb").normal((len(ids), d)) * init_scale
        proj = {name: rng.derive(name).normal((d, d)) / np.sqrt(d) for name in ("w_q", "w_k", "w_v")}
        return cls(
            category_ids=ids,
            category_emb=emb.astype(dtype),
            w_q=proj["w_q"].astype(dtype),
            w_k=proj["w_k"].astype(dtype),
            w_v=proj["w_v"].astype(dtype),
            lam=lam,
            dropout=dropout,
        )

    @property
    def d(self) -> int:
        return self.category_emb.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.category_emb.dtype

    def tensors(self) -> dict[str, Matrix]:
        return {name: getattr(self, name) for name in self.TENSORS}

    def update(self, values: dict[str, Matrix]) -> None:
        for name, value in values.items():
            if name not in self.TENSORS:
                raise KeyError(name)
            setattr(self, name, value)

    def copy(self) -> "GlobalModel":
        return GlobalModel(
            category_ids=list(self.category_ids),
            lam=self.lam,
            dropout=self.dropout,
            **{name: value.copy() for name, value in self.tensors().items()},
        )

    def rows(self, category_ids: Iterable[int]) -> list[int]:
        try:
            return [self._index[int(c)] for c in category_ids]
        except KeyError as e:
            raise ModelInputError(f"unknown category id {e.args[0]}") from None

    def bind(self, tape: Tape, trainable: Iterable[str] = (), prefix: str = "") -> dict[str, Node]:
        """Tape leaves for every tensor, keyed ``prefix + name``."""
        trainable = set(trainable)
        return {
            prefix + name: tape.leaf(value, prefix + name, requires_grad=prefix + name in trainable)
            for name, value in self.tensors().items()
        }


def inject_noise(tape: Tape, x_t: Node, t: int, lam: float) -> Node:
    """``lam * (x_t + e_t)`` as one 1 x d row."""
    e_t = tape.constant(step_embedding(t, x_t.cols, tape.dtype))
    return ops.scale(ops.add(x_t, e_t), lam)


def global_denoise(
    m: GlobalModel,
    nodes: dict[str, Node],
    history: Sequence[int],
    x_t: Node,
    t: int,
    rng: Optional[Rng] = None,
    prefix: str = "",
) -> Node:
    """Tape-level forward pass; ``history`` holds category ids."""
    if not history:
        raise ModelInputError("history must not be empty")
    z = ops.gather_rows(nodes[prefix + "category_emb"], m.rows(history))
    z = ops.add(z, inject_noise(x_t.tape, x_t, t, m.lam))
    return attend(
        z, nodes[prefix + "w_q"], nodes[prefix + "w_k"], nodes[prefix + "w_v"],
        dropout=m.dropout, rng=rng,
    )


def global_forward(m: GlobalModel, x_t: Matrix, history: Sequence[int], t: int) -> Matrix:
    """Inference-mode x0_hat for a 1 x d noised target."""
    tape = Tape(recording=False, dtype=m.dtype)
    nodes = m.bind(tape)
    x = tape.constant(np.asarray(x_t, dtype=m.dtype).reshape(1, -1))
    if x.cols != m.d:
        raise ModelInputError(f"x_t has width {x.cols}, model width is {m.d}")
    return global_denoise(m, nodes, history, x, t).value
