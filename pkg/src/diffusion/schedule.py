"""Square-root noise schedule.

The schedule is defined through its cumulative form
``alpha_bar[t] = 1 - sqrt(t / T + w)``, clamped into
``[ALPHA_BAR_FLOOR, ALPHA_BAR_CEIL]`` and forced strictly decreasing. Per-step
``alpha`` and ``beta`` are derived from consecutive ratios. Index 0 is the
starting-noise step, so ``alpha_bar[t] == prod(alpha[0..t])``.
"""

from dataclasses import dataclass

import numpy as np

from ..config import ALPHA_BAR_CEIL, ALPHA_BAR_FLOOR, MAX_DIFFUSION_STEP, STARTING_NOISE
from ..errors import ScheduleError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step tables for t = 0..T (all arrays have length T + 1)."""

    T: int
    w: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def check_step(self, t: int, lowest: int = 1) -> None:
        if not lowest <= t <= self.T:
            raise ScheduleError(f"step {t} outside [{lowest}, {self.T}]")


def _enforce_strictly_decreasing(alpha_bar: np.ndarray) -> np.ndarray:
    # Values pinned at the ceiling are nudged down, values pinned at the floor up.
    out = alpha_bar.copy()
    for t in range(1, len(out)):
        if out[t] >= out[t - 1] and out[t - 1] > ALPHA_BAR_FLOOR:
            out[t] = np.nextafter(out[t - 1], 0.0)
    for t in range(len(out) - 2, -1, -1):
        if out[t] <= out[t + 1]:
            out[t] = np.nextafter(out[t + 1], 1.0)
    return out


def build_schedule(T: int = MAX_DIFFUSION_STEP, w: float = STARTING_NOISE) -> NoiseSchedule:
    """Build the square-root schedule for ``T`` steps with starting noise ``w``."""
    if int(T) != T or T < 2:
        raise ScheduleError(f"T must be an integer >= 2, got {T}")
    if not 0.0 < w < 1.0:
        raise ScheduleError(f"w must lie in (0, 1), got {w}")

    steps = np.arange(T + 1, dtype=np.float64)
    alpha_bar = 1.0 - np.sqrt(steps / T + w)
    alpha_bar = np.clip(alpha_bar, ALPHA_BAR_FLOOR, ALPHA_BAR_CEIL)
    alpha_bar = _enforce_strictly_decreasing(alpha_bar)

    alpha = np.empty_like(alpha_bar)
    alpha[0] = alpha_bar[0]
    alpha[1:] = alpha_bar[1:] / alpha_bar[:-1]
    beta = 1.0 - alpha

    for table in (alpha_bar, alpha, beta):
        table.setflags(write=False)
    return NoiseSchedule(T=int(T), w=float(w), beta=beta, alpha=alpha, alpha_bar=alpha_bar)
