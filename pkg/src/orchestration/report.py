"""Stage and pipeline reports.

Reports are pydantic models. Their JSON and text renderings leave out
wall-clock timings so that two runs with the same seed produce
byte-identical files; timings are written to a separate file.
"""

import json
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

from ..text_loader import render_template

TIMING_FIELDS = {"seconds"}


class FreezeAudit(BaseModel):
    """Hash of the frozen tensors before and after a stage."""

    frozen: Literal["global", "region"] = Field(description="Which upstream model was frozen")
    hash_before: str
    hash_after: str

    @property
    def passed(self) -> bool:
        return self.hash_before == self.hash_after


class StageReport(BaseModel):
    """Outcome of one training job."""

    stage: Literal["global", "region", "device"]
    job_id: str
    init: str = Field(description="pretrained, scratch, random, or near-identity")
    examples: int = 0
    val_examples: int = 0
    epochs_run: int = 0
    best_epoch: int = 0
    train_loss: list[float] = Field(default_factory=list)
    val_loss: list[float] = Field(default_factory=list)
    freeze_audit: Optional[FreezeAudit] = None
    val_accuracy: Optional[float] = Field(default=None, description="Next-category accuracy (global stage)")
    skipped: bool = False
    note: Optional[str] = None
    seconds: float = 0.0


class PipelineReport(BaseModel):
    """Everything a pipeline run produced, minus the model tensors."""

    mode: Literal["dcpr", "dcpr_t"]
    seed: int
    config: dict[str, Any] = Field(default_factory=dict)
    global_stage: Optional[StageReport] = None
    region_stages: list[StageReport] = Field(default_factory=list)
    device_stages: list[StageReport] = Field(default_factory=list)
    metrics: Optional[dict[str, Any]] = Field(default=None, description="MetricsReport with patches")
    metrics_region_only: Optional[dict[str, Any]] = Field(default=None, description="MetricsReport without patches")
    completed: bool = False
    failure: Optional[str] = None

    @property
    def audits(self) -> list[FreezeAudit]:
        return [s.freeze_audit for s in self.region_stages + self.device_stages if s.freeze_audit is not None]

    @property
    def all_audits_passed(self) -> bool:
        return all(audit.passed for audit in self.audits)

    def deterministic_dict(self) -> dict[str, Any]:
        stage_exclude = {field: True for field in TIMING_FIELDS}
        return self.model_dump(
            mode="json",
            exclude={
                "global_stage": stage_exclude,
                "region_stages": {"__all__": stage_exclude},
                "device_stages": {"__all__": stage_exclude},
            },
        )

    def timings(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for stage in ([self.global_stage] if self.global_stage else []) + self.region_stages + self.device_stages:
            out[f"{stage.stage}:{stage.job_id}"] = stage.seconds
        return out


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.6f}"


def _stage_rows(stages: list[StageReport]) -> str:
    lines = [f"{'job':<14} {'init':<13} {'examples':>8} {'epochs':>6} {'best':>5} "
             f"{'final train':>12} {'best val':>12} {'audit':>7}"]
    for s in stages:
        if s.skipped:
            lines.append(f"{s.job_id:<14} skipped: {s.note or ''}")
            continue
        best_val = s.val_loss[s.best_epoch - 1] if s.best_epoch else None
        audit = "-" if s.freeze_audit is None else ("pass" if s.freeze_audit.passed else "FAIL")
        lines.append(
            f"{s.job_id:<14} {s.init:<13} {s.examples:>8} {s.epochs_run:>6} {s.best_epoch:>5} "
            f"{_fmt(s.train_loss[-1] if s.train_loss else None):>12} {_fmt(best_val):>12} {audit:>7}"
        )
    return "\n".join(lines)


def metrics_table(metrics: Optional[dict[str, Any]]) -> str:
    if not metrics:
        return "(not evaluated)"
    keys = list(metrics["overall"])
    lines = [f"{'scope':<10} {'cases':>6} " + " ".join(f"{k:>8}" for k in keys)]
    lines.append(f"{'overall':<10} {metrics['cases']:>6} " + " ".join(f"{metrics['overall'][k]:>8.4f}" for k in keys))
    for region, values in metrics["per_region"].items():
        cases = metrics["per_region_cases"][region]
        lines.append(f"{'region ' + str(region):<10} {cases:>6} " + " ".join(f"{values[k]:>8.4f}" for k in keys))
    if metrics.get("missing_patches"):
        lines.append(f"missing patches (region model used): {', '.join(metrics['missing_patches'])}")
    return "\n".join(lines)


def render_pipeline_report(report: PipelineReport) -> str:
    data = report.deterministic_dict()
    config_lines = "\n".join(f"  {key} = {value}" for key, value in sorted(data["config"].items()))
    global_stage = report.global_stage
    if global_stage is None or global_stage.skipped:
        global_text = f"skipped ({global_stage.note if global_stage else 'not run'})"
    else:
        global_text = _stage_rows([global_stage]) + f"\nvalidation next-category accuracy: {_fmt(global_stage.val_accuracy)}"
    return render_template(
        "pipeline_report.txt",
        mode=report.mode,
        seed=report.seed,
        status="completed" if report.completed else f"FAILED: {report.failure}",
        config=config_lines,
        global_stage=global_text,
        region_stages=_stage_rows(report.region_stages) if report.region_stages else "(none)",
        device_stages=_stage_rows(report.device_stages) if report.device_stages else "(none)",
        audits="all passed" if report.all_audits_passed else "VIOLATION",
        audit_count=len(report.audits),
        metrics=metrics_table(report.metrics),
        metrics_region_only=metrics_table(report.metrics_region_only),
    ) + "\n"


def write_pipeline_report(report: PipelineReport, out_dir: str | Path) -> dict[str, Path]:
    """Write ``pipeline_report.json``, ``pipeline_report.txt`` and ``timings.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "pipeline_report.json",
        "text": out_dir / "pipeline_report.txt",
        "timings": out_dir / "timings.json",
    }
    paths["json"].write_text(json.dumps(report.deterministic_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["text"].write_text(render_pipeline_report(report), encoding="utf-8")
    paths["timings"].write_text(json.dumps(report.timings(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
