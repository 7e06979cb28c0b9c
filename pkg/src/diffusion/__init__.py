"""Noise schedules, forward diffusion, and reverse samplers."""

from .sampling import (
    Denoiser,
    ReverseSubsequence,
    accelerated_reverse_step,
    build_subsequence,
    forward_diffuse,
    reverse_step,
    run_reverse,
    sample_step,
)
from .schedule import NoiseSchedule, build_schedule

__all__ = [
    "Denoiser",
    "NoiseSchedule",
    "ReverseSubsequence",
    "accelerated_reverse_step",
    "build_schedule",
    "build_subsequence",
    "forward_diffuse",
    "reverse_step",
    "run_reverse",
    "sample_step",
]
