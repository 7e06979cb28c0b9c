"""End-to-end cloud -> edge -> device pipeline and the transferability experiment.

The tiers are simulated in one machine. Models move between stages only as
checkpoint files under ``<out>/checkpoints``; edge jobs read the global
checkpoint and device jobs read their region's checkpoint. Every job draws
from its own seed ``(cfg.seed, stage, job_id)``, so the order in which
jobs run (or the number of worker processes) never changes a result.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from ..data.models import DeviceSequence, RegionData, TierSplits
from ..errors import DCPRError, FreezeViolationError, StageError
from ..evaluation import TrainedModels, evaluate_all
from ..numerics import Rng, derive_seed
from ..text_loader import render_template
from .checkpoint import GLOBAL_FILE, patch_file, region_file, save_checkpoint
from .report import PipelineReport, StageReport, write_pipeline_report
from .stages import personalize_device, specialize_region, train_global
from .train_config import TrainConfig

logger = logging.getLogger(__name__)

Mode = Literal["dcpr", "dcpr_t"]

# Run-location settings that must not leak into deterministic artifacts
LOCAL_FIELDS = {"out", "jobs", "progress", "enable_logging"}

REACH_TOLERANCE = 0.01


def report_config(cfg: TrainConfig) -> dict[str, Any]:
    """The resolved configuration as echoed into reports."""
    return {k: v for k, v in cfg.model_dump(mode="json").items() if k not in LOCAL_FIELDS}


def checkpoint_provenance(cfg: TrainConfig, mode: Mode) -> dict[str, Any]:
    """Config snapshot stored in every checkpoint."""
    return {**cfg.train_fields(), "mode": mode}


def job_seed(seed: int, stage: str, job_id: Any) -> Rng:
    return Rng(derive_seed(seed, stage, str(job_id)))


@dataclass
class JobOutcome:
    """What a worker hands back; exceptions do not cross process boundaries with their report."""

    report: Optional[StageReport]
    path: Optional[str] = None
    error: Optional[str] = None
    freeze_violation: bool = False


def _guarded(stage: str, job: str, fn: Callable[[], JobOutcome]) -> JobOutcome:
    try:
        return fn()
    except FreezeViolationError as e:
        return JobOutcome(report=e.report, error=str(e), freeze_violation=True)
    except StageError as e:
        return JobOutcome(report=e.report, error=str(e))
    except DCPRError as e:
        return JobOutcome(report=None, error=f"[{stage.upper()} {job}] {e}")


def region_job(
    global_path: Optional[str],
    region: RegionData,
    cfg: TrainConfig,
    mode: Mode,
    categories: Sequence[int],
    ckpt_dir: str,
    provenance: dict[str, Any],
) -> JobOutcome:
    """Specialize one region and write ``region_<r>.ckpt``."""
    def run() -> JobOutcome:
        model, report = specialize_region(
            global_path, region, cfg, job_seed(cfg.seed, "region", region.region_id),
            scratch=mode == "dcpr_t", categories=categories,
        )
        path = save_checkpoint(model, Path(ckpt_dir) / region_file(region.region_id), provenance)
        return JobOutcome(report=report, path=str(path))

    return _guarded("region", str(region.region_id), run)


def device_job(
    region_path: str,
    seq: DeviceSequence,
    cfg: TrainConfig,
    ckpt_dir: str,
    provenance: dict[str, Any],
) -> JobOutcome:
    """Train one user's patch and write ``patch_<u>@<r>.ckpt`` (nothing when skipped)."""
    def run() -> JobOutcome:
        patch, report = personalize_device(region_path, seq, cfg, job_seed(cfg.seed, "device", seq.job_id))
        if patch is None:
            return JobOutcome(report=report)
        path = save_checkpoint(patch, Path(ckpt_dir) / patch_file(seq.job_id), provenance)
        return JobOutcome(report=report, path=str(path))

    return _guarded("device", seq.job_id, run)


def _call(packed: tuple) -> JobOutcome:
    fn, args = packed
    return fn(*args)


def run_jobs(
    fn: Callable[..., JobOutcome],
    arg_list: list[tuple],
    jobs: int,
    desc: str,
    progress: bool = False,
) -> list[JobOutcome]:
    """Run ``fn(*args)`` for every entry, returning outcomes in submission order."""
    bar = tqdm(total=len(arg_list), desc=desc, disable=not progress, leave=False)
    outcomes: list[JobOutcome] = []
    try:
        if jobs <= 1 or len(arg_list) <= 1:
            for args in arg_list:
                outcomes.append(fn(*args))
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=min(jobs, len(arg_list))) as pool:
                for outcome in pool.map(_call, [(fn, args) for args in arg_list]):
                    outcomes.append(outcome)
                    bar.update(1)
    finally:
        bar.close()
    return outcomes


def _log_stage(run_log: Any, report: StageReport) -> None:
    if run_log is None or report.skipped:
        return
    run_log.log_stage_start(report.stage, report.job_id, report.examples)
    for epoch, (train, val) in enumerate(zip(report.train_loss, report.val_loss), start=1):
        run_log.log_epoch(report.stage, report.job_id, epoch, train, val)
    if report.freeze_audit is not None:
        audit = report.freeze_audit
        run_log.log_freeze_audit(report.job_id, audit.hash_before, audit.hash_after)
    run_log.log_stage_end(report.stage, report.job_id, report.epochs_run, report.best_epoch, report.seconds)


def _fail(report: PipelineReport, outcome: JobOutcome, out_dir: Path, run_log: Any) -> None:
    report.failure = outcome.error
    write_pipeline_report(report, out_dir)
    if run_log is not None:
        run_log.log_error("pipeline", outcome.error or "")
    logger.error("[PIPELINE] %s", outcome.error)
    error_cls = FreezeViolationError if outcome.freeze_violation else StageError
    raise error_cls(outcome.error or "stage failed", report)


def _collect(
    outcomes: list[JobOutcome],
    into: list[StageReport],
    report: PipelineReport,
    out_dir: Path,
    run_log: Any,
) -> None:
    for outcome in outcomes:
        if outcome.report is not None:
            into.append(outcome.report)
            _log_stage(run_log, outcome.report)
    for outcome in outcomes:
        if outcome.error is not None:
            _fail(report, outcome, out_dir, run_log)
        if outcome.path is not None and run_log is not None:
            run_log.log_checkpoint(outcome.path, outcome.report.stage if outcome.report else "unknown")


def run_pipeline(
    splits: TierSplits,
    cfg: TrainConfig,
    mode: Mode = "dcpr",
    out_dir: str | Path = "output",
    jobs: int = 1,
    run_log: Any = None,
    progress: bool = False,
) -> PipelineReport:
    """Cloud global training, parallel edge specialization, parallel device patches, then evaluation.

    Writes every checkpoint plus ``pipeline_report.json``/``.txt`` and
    ``timings.json`` to ``out_dir``. In ``dcpr_t`` mode the global stage is
    skipped and each region trains over a seeded scratch base.

    Raises:
        StageError: If any stage aborts; ``report`` holds the partial
            PipelineReport, which is also written to ``out_dir``.
        FreezeViolationError: If a freeze audit fails.
    """
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    provenance = checkpoint_provenance(cfg, mode)
    report = PipelineReport(mode=mode, seed=cfg.seed, config=report_config(cfg))
    logger.info(
        "[PIPELINE] mode=%s seed=%d: %d region(s), %d device job(s), %d worker(s)",
        mode, cfg.seed, len(splits.regions), len(splits.device_jobs()), jobs,
    )

    # Cloud
    global_path: Optional[str] = None
    if mode == "dcpr":
        try:
            model, stage = train_global(
                splits.global_sequences, splits.categories, cfg, job_seed(cfg.seed, "global", "cloud"),
            )
        except StageError as e:
            report.global_stage = e.report
            _fail(report, JobOutcome(report=e.report, error=str(e)), out_dir, run_log)
        except DCPRError as e:
            _fail(report, JobOutcome(report=None, error=f"[GLOBAL] {e}"), out_dir, run_log)
        report.global_stage = stage
        _log_stage(run_log, stage)
        global_path = str(save_checkpoint(model, ckpt_dir / GLOBAL_FILE, provenance))
        if run_log is not None:
            run_log.log_checkpoint(global_path, "global")
    else:
        report.global_stage = StageReport(
            stage="global", job_id="cloud", init="random", skipped=True,
            note="dcpr_t: regions are trained from scratch without the global model",
        )
        logger.info("[PIPELINE] dcpr_t mode: global pretraining skipped for region initialization")

    # Edge
    region_args = [
        (global_path, splits.regions[r], cfg, mode, splits.categories, str(ckpt_dir), provenance)
        for r in sorted(splits.regions)
    ]
    outcomes = run_jobs(region_job, region_args, jobs, "regions", progress)
    _collect(outcomes, report.region_stages, report, out_dir, run_log)

    # Device
    device_args = [
        (str(ckpt_dir / region_file(seq.region_id)), seq, cfg, str(ckpt_dir), provenance)
        for seq in splits.device_jobs()
    ]
    outcomes = run_jobs(device_job, device_args, jobs, "devices", progress)
    _collect(outcomes, report.device_stages, report, out_dir, run_log)

    models = TrainedModels.from_dir(ckpt_dir)
    report.metrics = evaluate_all(models, splits, cfg, use_patches=True).model_dump(mode="json")
    report.metrics_region_only = evaluate_all(models, splits, cfg, use_patches=False).model_dump(mode="json")
    report.completed = True
    paths = write_pipeline_report(report, out_dir)
    logger.info(
        "[PIPELINE] Done: %d audit(s) %s, report at %s",
        len(report.audits), "passed" if report.all_audits_passed else "FAILED", paths["text"],
    )
    return report


# =============================================================================
# Transferability: pretrained base vs. scratch base
# =============================================================================
def epochs_to_reach(curve: Sequence[float], target: float, tolerance: float = REACH_TOLERANCE) -> Optional[int]:
    """First 1-based epoch whose loss is within ``tolerance`` (relative) of ``target``, or None."""
    threshold = target + tolerance * abs(target)
    for epoch, value in enumerate(curve, start=1):
        if value <= threshold:
            return epoch
    return None


class TransferPair(BaseModel):
    """One region trained twice with the same seed: over the global model and over a scratch base."""

    repeat: int
    region_id: int
    epochs_pretrained: Optional[int] = Field(description="Epochs to reach the scratch run's best validation loss")
    epochs_run_pretrained: int
    epochs_scratch: int
    best_val_pretrained: float
    best_val_scratch: float
    seconds_pretrained: float
    seconds_scratch: float


class TransferReport(BaseModel):
    repeats: int
    tolerance: float
    pairs: list[TransferPair] = Field(default_factory=list)
    hr_at_10: dict[str, list[float]] = Field(default_factory=dict, description="Region-only test HR@10 per repeat")
    ndcg_at_10: dict[str, list[float]] = Field(default_factory=dict)

    def mean_epochs(self, which: Literal["pretrained", "scratch"]) -> float:
        """Unreached targets count as the full run length."""
        values = []
        for p in self.pairs:
            if which == "scratch":
                values.append(p.epochs_scratch)
            else:
                values.append(p.epochs_pretrained if p.epochs_pretrained is not None else p.epochs_run_pretrained)
        return float(np.mean(values)) if values else 0.0

    def render(self) -> str:
        def mean(values: list[float]) -> float:
            return float(np.mean(values)) if values else 0.0

        lines = [f"{'method':<8} {'region s':>9} {'epochs':>8} {'HR@10':>8} {'NDCG@10':>8}"]
        for label, which, key in (("DCPR", "pretrained", "dcpr"), ("DCPR-T", "scratch", "dcpr_t")):
            seconds = mean([getattr(p, f"seconds_{which}") for p in self.pairs])
            lines.append(
                f"{label:<8} {seconds:>9.3f} {self.mean_epochs(which):>8.2f} "
                f"{mean(self.hr_at_10.get(key, [])):>8.4f} {mean(self.ndcg_at_10.get(key, [])):>8.4f}"
            )
        pair_lines = [f"{'repeat':>6} {'region':>6} {'pre ep':>7} {'scr ep':>7} {'pre val':>10} {'scr val':>10}"]
        for p in self.pairs:
            reached = "-" if p.epochs_pretrained is None else str(p.epochs_pretrained)
            pair_lines.append(
                f"{p.repeat:>6} {p.region_id:>6} {reached:>7} {p.epochs_scratch:>7} "
                f"{p.best_val_pretrained:>10.6f} {p.best_val_scratch:>10.6f}"
            )
        return render_template(
            "transfer_report.txt",
            repeats=self.repeats,
            tolerance=self.tolerance,
            summary="\n".join(lines),
            pairs="\n".join(pair_lines),
        ) + "\n"


def compare_transfer(
    splits: TierSplits,
    cfg: TrainConfig,
    repeats: int = 3,
    tolerance: float = REACH_TOLERANCE,
) -> TransferReport:
    """Train every region with and without global pretraining, ``repeats`` times with paired seeds.

    For each pair, the epoch count is the first epoch whose validation loss
    comes within ``tolerance`` of the scratch run's best validation loss.
    Test accuracy is measured with the region models alone.
    """
    out = TransferReport(repeats=repeats, tolerance=tolerance, hr_at_10={"dcpr": [], "dcpr_t": []},
                         ndcg_at_10={"dcpr": [], "dcpr_t": []})
    for repeat in range(repeats):
        rcfg = cfg.model_copy(update={"seed": derive_seed(cfg.seed, "transfer", repeat)})
        started = time.perf_counter()
        base, _ = train_global(
            splits.global_sequences, splits.categories, rcfg, job_seed(rcfg.seed, "global", "cloud"),
        )
        logger.info("[TRANSFER] repeat %d: global model trained in %.1fs", repeat, time.perf_counter() - started)
        pretrained, scratch = TrainedModels(base), TrainedModels(None)
        for region_id in sorted(splits.regions):
            region = splits.regions[region_id]
            pre, pre_report = specialize_region(base, region, rcfg, job_seed(rcfg.seed, "region", region_id))
            scr, scr_report = specialize_region(
                None, region, rcfg, job_seed(rcfg.seed, "region", region_id),
                scratch=True, categories=splits.categories,
            )
            pretrained.regions[region_id] = pre
            scratch.regions[region_id] = scr
            target = min(scr_report.val_loss) if scr_report.val_loss else 0.0
            out.pairs.append(TransferPair(
                repeat=repeat,
                region_id=region_id,
                epochs_pretrained=epochs_to_reach(pre_report.val_loss, target, tolerance),
                epochs_run_pretrained=pre_report.epochs_run,
                epochs_scratch=epochs_to_reach(scr_report.val_loss, target, tolerance) or scr_report.epochs_run,
                best_val_pretrained=min(pre_report.val_loss) if pre_report.val_loss else 0.0,
                best_val_scratch=target,
                seconds_pretrained=pre_report.seconds,
                seconds_scratch=scr_report.seconds,
            ))
        for key, models in (("dcpr", pretrained), ("dcpr_t", scratch)):
            metrics = evaluate_all(models, splits, rcfg, use_patches=False)
            out.hr_at_10[key].append(metrics.overall["HR@10"])
            out.ndcg_at_10[key].append(metrics.overall["NDCG@10"])
    logger.info(
        "[TRANSFER] mean epochs to target: pretrained %.2f, scratch %.2f",
        out.mean_epochs("pretrained"), out.mean_epochs("scratch"),
    )
    return out
