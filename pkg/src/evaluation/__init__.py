"""Inference, candidate selection, ranking metrics, and efficiency benchmarks."""

from .bench import BenchReport, BenchRow, bench, hardware_info
from .candidates import CandidateSet, select_candidates
from .evaluate import MetricsReport, TrainedModels, evaluate_all
from .metrics import hr_at_k, ndcg_at_k, rank_of, summarize_ranks
from .recommend import (
    RankedList,
    category_accuracy,
    rank_items,
    recommend,
    recommend_category,
    region_denoiser,
)

__all__ = [
    "BenchReport",
    "BenchRow",
    "CandidateSet",
    "MetricsReport",
    "RankedList",
    "TrainedModels",
    "bench",
    "category_accuracy",
    "evaluate_all",
    "hardware_info",
    "hr_at_k",
    "ndcg_at_k",
    "rank_items",
    "rank_of",
    "recommend",
    "recommend_category",
    "region_denoiser",
    "select_candidates",
    "summarize_ranks",
]
