"""The three training stages: cloud global, edge region, and on-device patch.

Each stage trains only its own tensors. Upstream models are frozen, and a
SHA-256 over their tensors is compared before and after training.
"""

import hashlib
import logging
import time
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np

from ..data.models import DeviceSequence, RegionData
from ..denoisers import (
    GlobalModel,
    PatchModel,
    RegionModel,
    TrainingExample,
    ce_loss_node,
    global_denoise,
    holdout_examples,
    patch_denoise,
    region_denoise,
    sample_negatives,
    sliding_examples,
)
from ..diffusion import build_schedule
from ..errors import EmptyDatasetError, FreezeViolationError, StageError
from ..evaluation.recommend import category_accuracy
from ..numerics import Matrix, Node, Rng, Tape, derive_seed, ops
from .checkpoint import load_checkpoint
from .report import FreezeAudit, StageReport
from .train_config import TrainConfig
from .trainer import noised_target, train_loop

logger = logging.getLogger(__name__)


def tensor_hash(tensors: dict[str, Matrix]) -> str:
    """SHA-256 over names, dtypes, shapes, and raw bytes, in name order."""
    digest = hashlib.sha256()
    for name in sorted(tensors):
        value = np.ascontiguousarray(tensors[name])
        digest.update(name.encode("utf-8"))
        digest.update(value.dtype.str.encode("ascii"))
        digest.update(str(value.shape).encode("ascii"))
        digest.update(value.tobytes())
    return digest.hexdigest()


def _audit(frozen: str, job: str, before: str, after: str, report: StageReport, run_log) -> None:
    report.freeze_audit = FreezeAudit(frozen=frozen, hash_before=before, hash_after=after)
    if run_log is not None:
        run_log.log_freeze_audit(job, before, after)
    if before != after:
        raise FreezeViolationError(f"[{report.stage.upper()} {job}] frozen {frozen} tensors changed", report)


def _load(model_or_path, kind: str):
    if isinstance(model_or_path, (str, Path)):
        return load_checkpoint(model_or_path, expected_kind=kind)
    return model_or_path


# =============================================================================
# Cloud: global category model
# =============================================================================
def train_global(
    sequences: Sequence[Sequence[int]],
    categories: Sequence[int],
    cfg: TrainConfig,
    rng: Rng,
    run_log: Any = None,
) -> tuple[GlobalModel, StageReport]:
    """Train the global model on the cloud category sequences.

    Returns:
        The trained model and its stage report, including the next-category
        accuracy on the held-out last pair of each sequence.

    Raises:
        EmptyDatasetError: If there are no global sequences.
        StageError: If training diverges.
    """
    if not sequences:
        raise EmptyDatasetError("no global category sequences")
    started = time.perf_counter()
    schedule = build_schedule(cfg.T, cfg.w)
    model = GlobalModel.initialize(
        categories, cfg.d, rng.derive("init"),
        lam=cfg.lam, dropout=cfg.dropout, init_scale=cfg.init_scale, dtype=cfg.np_dtype,
    )
    train, val = holdout_examples([list(s) for s in sequences], cfg.max_history)
    report = StageReport(stage="global", job_id="cloud", init="random", examples=len(train), val_examples=len(val))
    logger.info("[GLOBAL] Training on %d example(s), %d held out", len(train), len(val))
    if run_log is not None:
        run_log.log_stage_start("global", "cloud", len(train))

    def example_loss(tape: Tape, nodes: dict[str, Node], ex: TrainingExample, r: Rng, training: bool) -> Node:
        target_row = model.rows([ex.target])[0]
        x0 = ops.gather_rows(nodes["category_emb"], [target_row])
        x_t, t = noised_target(tape, x0, schedule, r)
        x0_hat = global_denoise(model, nodes, ex.history, x_t, t, r if training else None)
        rows = sample_negatives(r, len(model.category_ids), target_row, cfg.negatives)
        return ce_loss_node(x0_hat, x0, ops.gather_rows(nodes["category_emb"], rows), cfg.loss_form)

    result = train_loop(
        "global", "cloud", model.tensors(), GlobalModel.TENSORS, example_loss,
        train, val, cfg, rng.derive("train"), run_log, report,
    )
    model.update(result.params)
    _fill(report, result, started)

    if val:
        report.val_accuracy = category_accuracy(model, val, schedule, cfg.T_R, rng.derive("accuracy"))
    logger.info(
        "[GLOBAL] Done after %d epoch(s) (best %d), validation accuracy %s",
        report.epochs_run, report.best_epoch,
        "-" if report.val_accuracy is None else f"{report.val_accuracy:.3f}",
    )
    if run_log is not None:
        run_log.log_stage_end("global", "cloud", report.epochs_run, report.best_epoch, report.seconds)
    return model, report


def _fill(report: StageReport, result, started: float) -> None:
    report.epochs_run = result.epochs_run
    report.best_epoch = result.best_epoch
    report.train_loss = result.train_loss
    report.val_loss = result.val_loss
    report.seconds = time.perf_counter() - started


# =============================================================================
# Edge: region specialization
# =============================================================================
def scratch_base(categories: Sequence[int], cfg: TrainConfig) -> GlobalModel:
    """Freshly initialized base used by the DCPR-T ablation (same seed for every region)."""
    return GlobalModel.initialize(
        categories, cfg.d, Rng(derive_seed(cfg.seed, "scratch_base")),
        lam=cfg.lam, dropout=cfg.dropout, init_scale=cfg.init_scale, dtype=cfg.np_dtype,
    )


def specialize_region(
    global_ckpt: Union[GlobalModel, str, Path, None],
    region: RegionData,
    cfg: TrainConfig,
    rng: Rng,
    scratch: bool = False,
    categories: Optional[Sequence[int]] = None,
    run_log: Any = None,
) -> tuple[RegionModel, StageReport]:
    """Train a region's POI and unit embeddings on its edge sequences over a frozen base.

    Args:
        global_ckpt: The pretrained global model or its checkpoint path.
            Ignored when ``scratch`` is set.
        region: The region's POIs and edge sequences.
        scratch: DCPR-T mode; the base is a seeded random initialization
            over ``categories`` instead of the pretrained model.

    Raises:
        EmptyDatasetError: If the region has no edge sequences.
        ModelInputError: If a region POI has a category the base lacks.
        FreezeViolationError: If the base tensors changed.
    """
    job = str(region.region_id)
    if not region.edge_sequences:
        raise EmptyDatasetError(f"region {job} has no edge sequences")
    started = time.perf_counter()
    if scratch:
        if categories is None:
            categories = sorted({p.category_id for p in region.pois})
        base = scratch_base(categories, cfg)
    else:
        if global_ckpt is None:
            raise StageError(f"[REGION {job}] a global checkpoint is required outside scratch mode")
        base = _load(global_ckpt, "global")
    model = RegionModel.initialize(
        base, region.region_id, region.pois,
        gamma_cat=cfg.gamma_cat, spatial_clip_km=cfg.spatial_clip_km, temporal_clip_h=cfg.temporal_clip_h,
    )
    schedule = build_schedule(cfg.T, cfg.w)
    train, val = holdout_examples(region.edge_sequences, cfg.max_history)
    report = StageReport(
        stage="region", job_id=job, init="scratch" if scratch else "pretrained",
        examples=len(train), val_examples=len(val),
    )
    logger.info("[REGION %s] Training %d POI embeddings on %d example(s)", job, model.num_pois, len(train))
    if run_log is not None:
        run_log.log_stage_start("region", job, len(train))

    deltas: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def example_loss(tape: Tape, nodes: dict[str, Node], ex: TrainingExample, r: Rng, training: bool) -> Node:
        if id(ex) not in deltas:
            deltas[id(ex)] = model.relation_deltas(ex.history)
        target_row = model.rows([ex.target.poi_id])[0]
        x0 = ops.gather_rows(nodes["poi_emb"], [target_row])
        x_t, t = noised_target(tape, x0, schedule, r)
        x0_hat = region_denoise(model, nodes, ex.history, x_t, t, r if training else None, deltas[id(ex)])
        rows = sample_negatives(r, model.num_pois, target_row, cfg.negatives)
        return ce_loss_node(x0_hat, x0, ops.gather_rows(nodes["poi_emb"], rows), cfg.loss_form)

    before = tensor_hash(base.tensors())
    result = train_loop(
        "region", job, model.tensors(), RegionModel.TRAINABLE, example_loss,
        train, val, cfg, rng.derive("train"), run_log, report,
    )
    model.update(result.params)
    _fill(report, result, started)
    _audit("global", job, before, tensor_hash(base.tensors()), report, run_log)
    logger.info("[REGION %s] Done after %d epoch(s) (best %d)", job, report.epochs_run, report.best_epoch)
    if run_log is not None:
        run_log.log_stage_end("region", job, report.epochs_run, report.best_epoch, report.seconds)
    return model, report


# =============================================================================
# Device: personal patch
# =============================================================================
def device_examples(
    seq: DeviceSequence, max_history: int
) -> tuple[list[TrainingExample], list[TrainingExample]]:
    """Sliding examples over the personal training prefix, plus the validation case."""
    train = sliding_examples(seq.train_visits, max_history)
    history, target = seq.val_case
    val = [TrainingExample(tuple(history[-max_history:]), target)] if history else []
    return train, val


def personalize_device(
    region_ckpt: Union[RegionModel, str, Path],
    seq: DeviceSequence,
    cfg: TrainConfig,
    rng: Rng,
    run_log: Any = None,
) -> tuple[Optional[PatchModel], StageReport]:
    """Train a personal patch on one user's on-device sequence through the frozen region model.

    The frozen region model runs in inference mode (no dropout).

    Returns:
        ``(None, report)`` with ``skipped`` set when the sequence has no
        training target.

    Raises:
        FreezeViolationError: If the region tensors changed.
    """
    job = seq.job_id
    region = _load(region_ckpt, "region")
    train, val = device_examples(seq, cfg.max_history)
    if not train:
        logger.warning("[DEVICE %s] No training targets on this device; skipping personalization", job)
        return None, StageReport(
            stage="device", job_id=job, init="near-identity", skipped=True, note="no training targets",
        )

    started = time.perf_counter()
    schedule = build_schedule(cfg.T, cfg.w)
    patch = PatchModel.initialize(seq.user_id, seq.region_id, region.d, cfg.patch_init_gain, region.dtype)
    report = StageReport(
        stage="device", job_id=job, init="near-identity", examples=len(train), val_examples=len(val),
    )
    if run_log is not None:
        run_log.log_stage_start("device", job, len(train))

    deltas: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def example_loss(tape: Tape, nodes: dict[str, Node], ex: TrainingExample, r: Rng, training: bool) -> Node:
        if id(ex) not in deltas:
            deltas[id(ex)] = region.relation_deltas(ex.history)
        target_row = region.rows([ex.target.poi_id])[0]
        x0 = ops.gather_rows(nodes["poi_emb"], [target_row])
        x_t, t = noised_target(tape, x0, schedule, r)
        x0_hat = patch_denoise(nodes, region_denoise(region, nodes, ex.history, x_t, t, None, deltas[id(ex)]))
        rows = sample_negatives(r, region.num_pois, target_row, cfg.negatives)
        return ce_loss_node(x0_hat, x0, ops.gather_rows(nodes["poi_emb"], rows), cfg.loss_form)

    tensors = dict(region.tensors())
    tensors.update(patch.tensors())
    before = tensor_hash(region.tensors())
    result = train_loop(
        "device", job, tensors, PatchModel.TENSORS, example_loss,
        train, val, cfg, rng.derive("train"), run_log, report,
    )
    patch.update(result.params)
    _fill(report, result, started)
    _audit("region", job, before, tensor_hash(region.tensors()), report, run_log)
    logger.debug("[DEVICE %s] Done after %d epoch(s) (best %d)", job, report.epochs_run, report.best_epoch)
    if run_log is not None:
        run_log.log_stage_end("device", job, report.epochs_run, report.best_epoch, report.seconds)
    return patch, report


__all__ = [
    "device_examples",
    "personalize_device",
    "scratch_base",
    "specialize_region",
    "tensor_hash",
    "train_global",
]
