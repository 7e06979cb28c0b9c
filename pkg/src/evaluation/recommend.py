"""On-device inference: reverse sampling followed by candidate scoring."""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..data.models import Visit
from ..denoisers import GlobalModel, PatchModel, RegionModel, TrainingExample, global_forward, patch_forward, region_forward
from ..diffusion import Denoiser, NoiseSchedule, build_subsequence, run_reverse
from ..errors import ModelInputError
from ..numerics import Matrix, Rng
from .candidates import CandidateSet


@dataclass(frozen=True)
class RankedList:
    """Items by descending score; equal scores go to the lower id.

    Items are POI ids, or category ids for ``recommend_category``.
    """

    items: tuple[int, ...]
    scores: tuple[float, ...]
    denoiser_calls: int

    def rank_of(self, item: int) -> int:
        """1-based position of ``item``."""
        return self.items.index(item) + 1

    def top(self, k: int) -> tuple[int, ...]:
        return self.items[:k]


def rank_items(x0: Matrix, table: Matrix, ids: Sequence[int]) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Score ``x0 . e`` for every row of ``table`` and order by (-score, id)."""
    scores = (np.asarray(x0, dtype=np.float64) @ np.asarray(table, dtype=np.float64).T)[0]
    ids_arr = np.asarray(ids, dtype=np.int64)
    order = np.lexsort((ids_arr, -scores))
    return tuple(int(ids_arr[i]) for i in order), tuple(float(scores[i]) for i in order)


def _sample(denoise: Denoiser, schedule: NoiseSchedule, T_R: int, rng: Rng, width: int, dtype,
            num_samples: int) -> tuple[Matrix, int]:
    subsequence = build_subsequence(schedule.T, T_R)
    total, calls = None, 0
    for _ in range(num_samples):
        x0, used = run_reverse(denoise, schedule, rng, width, subsequence, dtype=dtype)
        total = x0 if total is None else total + x0
        calls += used
    return total / num_samples, calls


def region_denoiser(region: RegionModel, patch: Optional[PatchModel], history: Sequence[Visit]) -> Denoiser:
    """``x0_hat = patch(region(x_t, history, t))``, or the region model alone without a patch."""
    if not history:
        raise ModelInputError("history must not be empty")
    region.rows(v.poi_id for v in history)
    if patch is not None and patch.d != region.d:
        raise ModelInputError(f"patch width {patch.d} does not match region width {region.d}")
    deltas = region.relation_deltas(history)

    def denoise(x_t: Matrix, t: int) -> Matrix:
        x0_hat = region_forward(region, x_t, history, t, deltas)
        return patch_forward(patch, x0_hat) if patch is not None else x0_hat

    return denoise


def recommend(
    region_model: RegionModel,
    patch_model: Optional[PatchModel],
    history: Sequence[Visit],
    schedule: NoiseSchedule,
    T_R: int,
    rng: Rng,
    candidates: Union[CandidateSet, Sequence[int]],
    num_samples: int = 1,
) -> RankedList:
    """Rank ``candidates`` for the next visit after ``history``.

    Starts from Gaussian noise at step T and walks the T_R-step skip
    subsequence, so the denoiser runs exactly ``T_R * num_samples`` times.
    """
    ids = list(candidates.poi_ids if isinstance(candidates, CandidateSet) else candidates)
    if not ids:
        raise ModelInputError("candidate set is empty")
    rows = region_model.rows(ids)
    denoise = region_denoiser(region_model, patch_model, history)
    x0, calls = _sample(denoise, schedule, T_R, rng, region_model.d, region_model.dtype, num_samples)
    items, scores = rank_items(x0, region_model.poi_emb[rows], ids)
    return RankedList(items=items, scores=scores, denoiser_calls=calls)


def recommend_category(
    model: GlobalModel,
    history: Sequence[int],
    schedule: NoiseSchedule,
    T_R: int,
    rng: Rng,
    num_samples: int = 1,
) -> RankedList:
    """Greedy next-category decoding with the global model; ``items[0]`` is the prediction."""
    model.rows(history)

    def denoise(x_t: Matrix, t: int) -> Matrix:
        return global_forward(model, x_t, history, t)

    x0, calls = _sample(denoise, schedule, T_R, rng, model.d, model.dtype, num_samples)
    items, scores = rank_items(x0, model.category_emb, model.category_ids)
    return RankedList(items=items, scores=scores, denoiser_calls=calls)


def category_accuracy(
    model: GlobalModel,
    examples: Sequence[TrainingExample],
    schedule: NoiseSchedule,
    T_R: int,
    rng: Rng,
) -> float:
    """Share of examples whose target is the top-scored category."""
    if not examples:
        return 0.0
    hits = 0
    for index, ex in enumerate(examples):
        ranked = recommend_category(model, list(ex.history), schedule, T_R, rng.derive("case", index))
        hits += int(ranked.items[0] == ex.target)
    return hits / len(examples)
