"""Single-ground-truth ranking metrics."""

from typing import Iterable, Sequence

import numpy as np

from ..config import METRIC_CUTOFFS


def _check(rank: int, k: int) -> None:
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if rank < 1:
        raise ValueError(f"rank must be at least 1, got {rank}")


def hr_at_k(rank: int, k: int) -> int:
    """1 when the ground truth sits at ``rank <= k`` (1-based), else 0."""
    _check(rank, k)
    return int(rank <= k)


def ndcg_at_k(rank: int, k: int) -> float:
    """``1 / log2(rank + 1)`` when ``rank <= k``, else 0."""
    _check(rank, k)
    return float(1.0 / np.log2(rank + 1)) if rank <= k else 0.0


def rank_of(ranked: Sequence[int], ground_truth: int) -> int:
    """1-based position of ``ground_truth`` in a ranked list."""
    try:
        return list(ranked).index(ground_truth) + 1
    except ValueError:
        raise ValueError(f"ground truth {ground_truth} is not among the ranked items") from None


def summarize_ranks(ranks: Iterable[int], cutoffs: Sequence[int] = METRIC_CUTOFFS) -> dict[str, float]:
    """Mean HR@k and NDCG@k over test cases, keyed ``HR@5``, ``NDCG@5``, ..."""
    ranks = list(ranks)
    out: dict[str, float] = {}
    for k in cutoffs:
        out[f"HR@{k}"] = float(np.mean([hr_at_k(r, k) for r in ranks])) if ranks else 0.0
    for k in cutoffs:
        out[f"NDCG@{k}"] = float(np.mean([ndcg_at_k(r, k) for r in ranks])) if ranks else 0.0
    return out
