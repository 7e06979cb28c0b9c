"""Sinusoidal diffusion-step embeddings."""

from functools import lru_cache

import numpy as np

from ..numerics import Matrix


@lru_cache(maxsize=4096)
def _step_embedding(t: int, d: int, dtype: str) -> Matrix:
    out = np.zeros((1, d), dtype=np.float64)
    pairs = (d + 1) // 2
    freqs = 1.0 / np.power(10000.0, 2.0 * np.arange(pairs) / d)
    angles = t * freqs
    out[0, 0::2] = np.sin(angles)[: len(out[0, 0::2])]
    out[0, 1::2] = np.cos(angles)[: len(out[0, 1::2])]
    out = out.astype(dtype)
    out.setflags(write=False)
    return out


def step_embedding(t: int, d: int, dtype=np.float64) -> Matrix:
    """1 x d encoding of step ``t``: ``[sin(t*f_0), cos(t*f_0), sin(t*f_1), ...]``.

    ``f_i = 1 / 10000^(2i/d)``. The returned array is shared and read-only.
    """
    if t < 0:
        raise ValueError(f"step must be non-negative, got {t}")
    return _step_embedding(int(t), int(d), np.dtype(dtype).name)
