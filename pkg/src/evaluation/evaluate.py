"""Leave-one-out test evaluation over every on-device sequence."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Union

from pydantic import BaseModel, Field

from ..data.models import TierSplits
from ..denoisers import GlobalModel, PatchModel, RegionModel
from ..diffusion import build_schedule
from ..errors import ModelInputError
from ..numerics import Rng, derive_seed
from .candidates import select_candidates
from .metrics import summarize_ranks
from .recommend import recommend

if TYPE_CHECKING:
    from ..orchestration.train_config import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class TrainedModels:
    """The models a pipeline run produced, keyed the way they are distributed."""

    global_model: Optional[GlobalModel]
    regions: dict[int, RegionModel] = field(default_factory=dict)
    patches: dict[str, PatchModel] = field(default_factory=dict)  # by "user@region"

    @classmethod
    def from_dir(cls, ckpt_dir: Union[str, Path]) -> "TrainedModels":
        """Load ``global.ckpt``, ``region_<r>.ckpt`` and ``patch_<u>@<r>.ckpt`` files.

        The global checkpoint is optional (DCPR-T runs do not need one).
        """
        from ..orchestration.checkpoint import GLOBAL_FILE, load_checkpoint

        ckpt_dir = Path(ckpt_dir)
        if not ckpt_dir.is_dir():
            raise FileNotFoundError(f"checkpoint directory not found: {ckpt_dir}")
        global_path = ckpt_dir / GLOBAL_FILE
        global_model = load_checkpoint(global_path, "global") if global_path.exists() else None
        regions: dict[int, RegionModel] = {}
        for path in sorted(ckpt_dir.glob("region_*.ckpt")):
            model = load_checkpoint(path, "region")
            regions[model.region_id] = model
        patches: dict[str, PatchModel] = {}
        for path in sorted(ckpt_dir.glob("patch_*.ckpt")):
            patch = load_checkpoint(path, "patch")
            patches[patch.job_id] = patch
        return cls(global_model=global_model, regions=regions, patches=patches)


class MetricsReport(BaseModel):
    """HR@k / NDCG@k averaged over test cases, overall and per region."""

    overall: dict[str, float]
    cases: int
    per_region: dict[int, dict[str, float]] = Field(default_factory=dict)
    per_region_cases: dict[int, int] = Field(default_factory=dict)
    ranks: dict[str, int] = Field(default_factory=dict, description="Rank of the ground truth per user@region")
    missing_patches: list[str] = Field(default_factory=list, description="Jobs scored with the region model alone")
    use_patches: bool = True
    T_R: int
    candidates: int


def evaluate_all(
    models: TrainedModels,
    splits: TierSplits,
    cfg: "TrainConfig",
    use_patches: bool = True,
    T_R: Optional[int] = None,
) -> MetricsReport:
    """Rank each device sequence's last visit among its candidates.

    Candidates exclude everything the user visited; the denoiser sees the
    last ``cfg.max_history`` visits, as in training.
    Each job samples with its own seed ``(cfg.seed, "eval", job_id)``, so
    results do not depend on evaluation order. Users without a patch are
    scored by the region model alone and listed in ``missing_patches``.

    Raises:
        ModelInputError: If a region with test cases has no model.
    """
    T_R = cfg.T_R if T_R is None else T_R
    schedule = build_schedule(cfg.T, cfg.w)
    ranks: dict[str, int] = {}
    region_ranks: dict[int, list[int]] = {}
    missing: list[str] = []

    for region_id in sorted(splits.regions):
        region = splits.regions[region_id]
        if not region.device_sequences:
            continue
        model = models.regions.get(region_id)
        if model is None:
            raise ModelInputError(f"no region model for region {region_id}")
        for seq in region.device_sequences:
            job = seq.job_id
            patch = models.patches.get(job) if use_patches else None
            if use_patches and patch is None:
                logger.warning("[EVAL %s] No patch model; scoring with the region model alone", job)
                missing.append(job)
            history, target = seq.test_case
            candidates = select_candidates(history, region.pois, cfg.candidates, ground_truth=target.poi_id)
            ranked = recommend(
                model, patch, history[-cfg.max_history:], schedule, T_R, Rng(derive_seed(cfg.seed, "eval", job)),
                candidates, num_samples=cfg.num_samples,
            )
            ranks[job] = ranked.rank_of(target.poi_id)
            region_ranks.setdefault(region_id, []).append(ranks[job])

    report = MetricsReport(
        overall=summarize_ranks(ranks.values()),
        cases=len(ranks),
        per_region={r: summarize_ranks(values) for r, values in region_ranks.items()},
        per_region_cases={r: len(values) for r, values in region_ranks.items()},
        ranks=ranks,
        missing_patches=missing,
        use_patches=use_patches,
        T_R=T_R,
        candidates=cfg.candidates,
    )
    logger.info(
        "[EVAL] %d case(s)%s: %s", report.cases, "" if use_patches else " (region only)",
        ", ".join(f"{k}={v:.4f}" for k, v in report.overall.items()),
    )
    return report
