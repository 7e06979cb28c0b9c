"""On-device efficiency benchmarks: model size, training time, and inference latency.

Rows are produced per (d, T_R). Sizes are the serialized checkpoints a
device would hold for its region plus its patch. Latencies are medians
over warm ``recommend`` calls; the first few calls are discarded.
"""

import logging
import os
import platform
import time
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..config import BENCH_REPEATS
from ..data.models import DeviceSequence, Poi, TierSplits, Visit
from ..denoisers import GlobalModel, PatchModel, RegionModel
from ..diffusion import build_schedule
from ..errors import ConfigError, ModelInputError
from ..numerics import Rng, derive_seed
from ..text_loader import render_template
from .candidates import select_candidates
from .evaluate import TrainedModels, evaluate_all
from .recommend import recommend

if TYPE_CHECKING:
    from ..orchestration.train_config import TrainConfig

logger = logging.getLogger(__name__)

MB = 1024 * 1024
WARMUP_CALLS = 3
EPOCH_REPEATS = 3
SYNTHETIC_WALK = 12


class BenchRow(BaseModel):
    d: int
    T_R: int
    size_mb: float = Field(description="Region checkpoint plus patch checkpoint")
    region_mb: float
    patch_mb: float
    embedding_mb: float = Field(description="The region's own POI and unit embeddings (float32)")
    epoch_seconds: float = Field(description="Median wall time of one device training epoch")
    latency_ms: float = Field(description="Median wall time of one recommendation")
    denoiser_calls: int
    hr_at_10: Optional[float] = Field(default=None, description="Test HR@10 when trained models and splits are given")


class BenchReport(BaseModel):
    hardware: dict[str, str]
    region_id: int
    num_pois: int
    repeats: int
    rows: list[BenchRow] = Field(default_factory=list)

    def row(self, d: int, T_R: int) -> BenchRow:
        for r in self.rows:
            if r.d == d and r.T_R == T_R:
                return r
        raise KeyError((d, T_R))

    def render(self) -> str:
        header = (f"{'d':>5} {'T_R':>5} {'size MB':>9} {'region MB':>10} {'patch MB':>9} {'emb MB':>8} "
                  f"{'epoch s':>9} {'latency ms':>11} {'calls':>6} {'HR@10':>7}")
        lines = [header]
        for r in self.rows:
            hr = "-" if r.hr_at_10 is None else f"{r.hr_at_10:.4f}"
            lines.append(
                f"{r.d:>5} {r.T_R:>5} {r.size_mb:>9.4f} {r.region_mb:>10.4f} {r.patch_mb:>9.4f} "
                f"{r.embedding_mb:>8.4f} {r.epoch_seconds:>9.4f} {r.latency_ms:>11.3f} {r.denoiser_calls:>6} {hr:>7}"
            )
        return render_template(
            "bench_report.txt",
            hardware="\n".join(f"  {k}: {v}" for k, v in sorted(self.hardware.items())),
            region_id=self.region_id,
            num_pois=self.num_pois,
            repeats=self.repeats,
            table="\n".join(lines),
        ) + "\n"


def hardware_info() -> dict[str, str]:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "cpus": str(os.cpu_count()),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _pois_of(region: RegionModel) -> list[Poi]:
    return [
        Poi(id=pid, category_id=cat, lat=float(lat), lon=float(lon), region_id=region.region_id)
        for pid, cat, (lat, lon) in zip(region.poi_ids, region.poi_categories, region.poi_coords)
    ]


def _synthetic_walk(pois: Sequence[Poi], region_id: int, rng: Rng) -> DeviceSequence:
    """Hourly visits to random region POIs, for benchmarks without real device data."""
    picks = rng.integers(0, len(pois), size=SYNTHETIC_WALK)
    visits = [
        Visit(pois[i].id, pois[i].category_id, pois[i].lat, pois[i].lon, 3600 * step)
        for step, i in enumerate(picks.tolist())
    ]
    return DeviceSequence(user_id=0, region_id=region_id, visits=visits)


def _median_seconds(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        times.append(time.perf_counter() - started)
    return float(np.median(times))


def bench(
    models: Optional[TrainedModels],
    cfg: "TrainConfig",
    dims: Sequence[int],
    t_rs: Sequence[int],
    splits: Optional[TierSplits] = None,
    repeats: int = BENCH_REPEATS,
    region_id: Optional[int] = None,
) -> BenchReport:
    """Measure size, device epoch time, and latency for every ``d`` in ``dims`` and ``T_R`` in ``t_rs``.

    A ``d`` equal to the trained models' width uses the trained region and
    patch; other widths use freshly initialized models over the same POIs.
    HR@10 is filled in only for trained models when ``splits`` is given.
    """
    from ..orchestration.checkpoint import encode_checkpoint
    from ..orchestration.stages import personalize_device

    bad = [t for t in t_rs if not 1 <= t <= cfg.T]
    if bad:
        raise ConfigError(f"T_R values {bad} lie outside [1, {cfg.T}]")
    if models is not None and models.regions:
        region_id = min(models.regions) if region_id is None else region_id
        if region_id not in models.regions:
            raise ModelInputError(f"no region model for region {region_id}")
        trained: Optional[RegionModel] = models.regions[region_id]
        pois, categories = _pois_of(trained), trained.base.category_ids
    elif splits is not None and splits.regions:
        region_id = min(splits.regions) if region_id is None else region_id
        trained = None
        pois, categories = splits.regions[region_id].pois, splits.categories
    else:
        raise ModelInputError("bench needs trained models or tier splits")

    seq = None
    if splits is not None and region_id in splits.regions:
        seq = next((s for s in splits.regions[region_id].device_sequences if len(s.train_visits) >= 2), None)
    if seq is None:
        seq = _synthetic_walk(pois, region_id, Rng(derive_seed(cfg.seed, "bench", "walk")))
    history, target = seq.test_case
    candidates = select_candidates(history, pois, cfg.candidates, ground_truth=target.poi_id)
    history = history[-cfg.max_history:]
    schedule = build_schedule(cfg.T, cfg.w)

    report = BenchReport(hardware=hardware_info(), region_id=region_id, num_pois=len(pois), repeats=repeats)
    for d in dims:
        if trained is not None and trained.d == d:
            region = trained
            patch = models.patches.get(seq.job_id) if models is not None else None
        else:
            base = GlobalModel.initialize(
                categories, d, Rng(derive_seed(cfg.seed, "bench", d)),
                lam=cfg.lam, dropout=cfg.dropout, init_scale=cfg.init_scale, dtype=cfg.np_dtype,
            )
            region = RegionModel.initialize(
                base, region_id, pois,
                gamma_cat=cfg.gamma_cat, spatial_clip_km=cfg.spatial_clip_km, temporal_clip_h=cfg.temporal_clip_h,
            )
            patch = None
        if patch is None:
            patch = PatchModel.initialize(seq.user_id, region_id, d, cfg.patch_init_gain, region.dtype)

        region_bytes = len(encode_checkpoint(region))
        patch_bytes = len(encode_checkpoint(patch))
        embedding_bytes = 4 * sum(v.size for v in region.trainable_tensors().values())

        epoch_cfg = cfg.model_copy(update={"d": d, "max_epochs": 1})
        epoch_seconds = _median_seconds(
            lambda: personalize_device(region, seq, epoch_cfg, Rng(derive_seed(cfg.seed, "bench", "epoch", d))),
            EPOCH_REPEATS,
        )

        for t_r in t_rs:
            rng = Rng(derive_seed(cfg.seed, "bench", d, t_r))
            calls = 0

            def infer() -> None:
                nonlocal calls
                calls = recommend(region, patch, history, schedule, t_r, rng, candidates).denoiser_calls

            for _ in range(WARMUP_CALLS):
                infer()
            latency = _median_seconds(infer, repeats)

            hr = None
            if splits is not None and region is trained and models is not None:
                hr = evaluate_all(models, splits, cfg, use_patches=True, T_R=t_r).overall["HR@10"]
            report.rows.append(BenchRow(
                d=d, T_R=t_r,
                size_mb=(region_bytes + patch_bytes) / MB,
                region_mb=region_bytes / MB,
                patch_mb=patch_bytes / MB,
                embedding_mb=embedding_bytes / MB,
                epoch_seconds=epoch_seconds,
                latency_ms=latency * 1000.0,
                denoiser_calls=calls,
                hr_at_10=hr,
            ))
            logger.info("[BENCH] d=%d T_R=%d latency %.3f ms (%d denoiser calls)", d, t_r, latency * 1000.0, calls)
    return report
