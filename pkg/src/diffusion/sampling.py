"""Forward noising, reverse denoising steps, and the skip-step sampler."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ScheduleError
from ..numerics import Matrix, Rng, sample_gaussian
from .schedule import NoiseSchedule

Denoiser = Callable[[Matrix, int], Matrix]
"""Maps (x_t, t) to the clean-target estimate x0_hat."""


@dataclass(frozen=True)
class ReverseSubsequence:
    """Arithmetic, strictly decreasing steps from T down to 0."""

    steps: tuple[int, ...]

    @property
    def T_R(self) -> int:
        """Number of reverse transitions (denoiser calls)."""
        return len(self.steps) - 1

    def transitions(self) -> list[tuple[int, int]]:
        return list(zip(self.steps[:-1], self.steps[1:]))


def _noise(rng: Optional[Rng], shape: tuple[int, int], eps: Optional[Matrix], dtype) -> Matrix:
    if eps is not None:
        if eps.shape != shape:
            raise ScheduleError(f"injected noise has shape {eps.shape}, expected {shape}")
        return eps
    if rng is None:
        raise ScheduleError("either rng or eps must be given")
    return sample_gaussian(rng, *shape, dtype=dtype)


def forward_diffuse(
    x0: Matrix,
    t: int,
    s: NoiseSchedule,
    rng: Optional[Rng] = None,
    eps: Optional[Matrix] = None,
) -> tuple[Matrix, Matrix]:
    """Noise ``x0`` directly to step ``t``. Returns ``(x_t, eps)``."""
    s.check_step(t)
    eps = _noise(rng, x0.shape, eps, x0.dtype)
    ab = s.alpha_bar[t]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    return x_t.astype(x0.dtype, copy=False), eps


def sample_step(rng: Rng, T: int) -> int:
    """Uniform training step in [1, T]."""
    return int(rng.integers(1, T + 1))


def reverse_step(
    x_t: Matrix,
    t: int,
    x0_hat: Matrix,
    s: NoiseSchedule,
    rng: Optional[Rng] = None,
    eps: Optional[Matrix] = None,
) -> Matrix:
    """One stochastic reverse step from ``t`` to ``t - 1``."""
    s.check_step(t)
    eps = _noise(rng, x_t.shape, eps, x_t.dtype)
    a, ab, ab_prev = s.alpha[t], s.alpha_bar[t], s.alpha_bar[t - 1]
    numerator = (
        np.sqrt(a) * (1.0 - ab_prev) * x_t
        + np.sqrt(ab_prev) * (1.0 - a) * x0_hat
        + (1.0 - a) * (1.0 - ab_prev) * eps
    )
    return (numerator / (1.0 - ab)).astype(x_t.dtype, copy=False)


def build_subsequence(T: int, T_R: int) -> ReverseSubsequence:
    """Arithmetic decreasing steps ``[T, T - T/T_R, ..., 0]`` rounded to integers."""
    if T < 1:
        raise ScheduleError(f"T must be positive, got {T}")
    if not 1 <= T_R <= T:
        raise ScheduleError(f"T_R must lie in [1, {T}], got {T_R}")
    raw = np.rint(T - np.arange(T_R + 1) * (T / T_R)).astype(int)
    raw[0], raw[-1] = T, 0
    steps: list[int] = []
    for step in raw.tolist():
        if not steps or step < steps[-1]:
            steps.append(step)
    return ReverseSubsequence(steps=tuple(steps))


def accelerated_reverse_step(
    x_ts: Matrix,
    t_s: int,
    t_prev: int,
    x0_hat: Matrix,
    s: NoiseSchedule,
) -> Matrix:
    """Deterministic skip step from ``t_s`` down to ``t_prev``."""
    if not 0 <= t_prev < t_s <= s.T:
        raise ScheduleError(f"need 0 <= t_prev < t_s <= {s.T}, got t_s={t_s}, t_prev={t_prev}")
    ab_s, ab_prev = s.alpha_bar[t_s], s.alpha_bar[t_prev]
    eps_hat = (x_ts - np.sqrt(ab_s) * x0_hat) / np.sqrt(1.0 - ab_s)
    out = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    return out.astype(x_ts.dtype, copy=False)


def run_reverse(
    denoise: Denoiser,
    s: NoiseSchedule,
    rng: Rng,
    width: int,
    subsequence: Optional[ReverseSubsequence] = None,
    stochastic: bool = False,
    dtype=np.float64,
) -> tuple[Matrix, int]:
    """Sample x_0 from pure noise. Returns ``(x_0, denoiser_calls)``.

    The default walks ``subsequence`` with the deterministic skip step;
    ``stochastic=True`` chains the one-step reverse update over every step.
    """
    x = sample_gaussian(rng, 1, width, dtype=dtype)
    calls = 0
    if stochastic:
        for t in range(s.T, 0, -1):
            x = reverse_step(x, t, denoise(x, t), s, rng)
            calls += 1
        return x, calls

    subsequence = subsequence or build_subsequence(s.T, s.T)
    for t_s, t_prev in subsequence.transitions():
        x = accelerated_reverse_step(x, t_s, t_prev, denoise(x, t_s), s)
        calls += 1
    return x, calls
