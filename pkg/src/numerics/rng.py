"""Deterministic random streams.

Uniforms come from numpy's counter-based Philox bit generator keyed by the
seed; Gaussians are produced from those uniforms by Box-Muller, so a seed
yields the same samples on every platform.
"""

import hashlib

import numpy as np

from .tape import Matrix

_SEED_MASK = (1 << 64) - 1


def derive_seed(base_seed: int, *labels: object) -> int:
    """Stable 64-bit seed for a (base seed, stage, job id, ...) tuple."""
    text = "/".join([str(base_seed), *(str(label) for label in labels)])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


class Rng:
    """A seeded random stream. Identical seeds give identical sequences."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & _SEED_MASK
        self._generator = np.random.Generator(np.random.Philox(key=self.seed))

    def derive(self, *labels: object) -> "Rng":
        """Independent child stream, e.g. ``rng.derive("region", 3)``."""
        return Rng(derive_seed(self.seed, *labels))

    def uniform(self, size) -> np.ndarray:
        """Uniform floats in [0, 1)."""
        return self._generator.random(size)

    def normal(self, size) -> np.ndarray:
        """Standard normal draws via Box-Muller."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u1 = 1.0 - self._generator.random(pairs)  # (0, 1], keeps log finite
        u2 = self._generator.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:count].reshape(shape)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        return self._generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def shuffled(self, items: list) -> list:
        return [items[i] for i in self.permutation(len(items))]

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._generator.choice(n, size=size, replace=replace)


def sample_gaussian(rng: Rng, rows: int, cols: int, dtype=np.float64) -> Matrix:
    """i.i.d. N(0, 1) matrix drawn from ``rng``."""
    return rng.normal((rows, cols)).astype(dtype, copy=False)
