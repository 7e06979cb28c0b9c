"""Run logger for tracking training stages.

This module captures what happened during a pipeline run: stage starts and
ends, per-epoch losses, freeze audits, and checkpoint writes. The logs are
saved in JSON format for later inspection; they carry wall-clock times and
are therefore not part of the deterministic reports.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config import LOGS_DIR


class RunLogger:
    """Logs the events of one pipeline or stage run.

    Attributes:
        session_id: Timestamp identifying this run.
        log_dir: Directory where log files are saved.
        log_file: Path to this run's log file.
        events: Every event logged so far.
    """

    def __init__(self, run_name: str = "run", log_dir: Optional[str | Path] = None, config: Optional[Dict] = None):
        """Initialize the run logger.

        Args:
            run_name: Label for the run (used in the filename).
            log_dir: Directory for log files (created if missing). Defaults to LOGS_DIR.
            config: Resolved run configuration, stored in the header.
        """
        self.session_id = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
        self.log_dir = Path(log_dir) if log_dir is not None else Path(LOGS_DIR)
        self.log_dir.mkdir(parents=True, exist_ok=True)

        safe_name = "".join(c if c.isalnum() or c in ("-", "_") else "_" for c in run_name)[:50]
        self.log_file = self.log_dir / f"{safe_name}_{self.session_id}.json"
        self.events: List[Dict[str, Any]] = []
        self._header = {
            "session_id": self.session_id,
            "run_name": run_name,
            "start_time": datetime.now().isoformat(),
            "config": config or {},
        }
        self._flush()

    def log_stage_start(self, stage: str, job_id: str, examples: int) -> None:
        self._append({"type": "stage_start", "stage": stage, "job_id": job_id, "examples": examples})

    def log_epoch(self, stage: str, job_id: str, epoch: int, train_loss: float, val_loss: Optional[float]) -> None:
        self._append({
            "type": "epoch",
            "stage": stage,
            "job_id": job_id,
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
        })

    def log_stage_end(self, stage: str, job_id: str, epochs_run: int, best_epoch: int, seconds: float) -> None:
        self._append({
            "type": "stage_end",
            "stage": stage,
            "job_id": job_id,
            "epochs_run": epochs_run,
            "best_epoch": best_epoch,
            "seconds": seconds,
        })

    def log_freeze_audit(self, job_id: str, before: str, after: str) -> None:
        self._append({
            "type": "freeze_audit",
            "job_id": job_id,
            "hash_before": before,
            "hash_after": after,
            "passed": before == after,
        })

    def log_checkpoint(self, path: str | Path, kind: str) -> None:
        self._append({"type": "checkpoint", "kind": kind, "path": str(path)})

    def log_error(self, stage: str, message: str) -> None:
        self._append({"type": "error", "stage": stage, "message": message})

    def _append(self, event: Dict[str, Any]) -> None:
        event = {"timestamp": datetime.now().isoformat(), **event}
        self.events.append(event)
        self._flush()

    def _flush(self) -> None:
        with open(self.log_file, "w", encoding="utf-8") as f:
            json.dump({**self._header, "events": self.events}, f, indent=2, ensure_ascii=False)


class NullRunLogger:
    """Stand-in used when run logging is disabled."""

    def __getattr__(self, name: str):
        if name.startswith("log_"):
            return lambda *args, **kwargs: None
        raise AttributeError(name)


def make_run_logger(enabled: bool, run_name: str, log_dir: Optional[str | Path], config: Optional[Dict] = None):
    """A RunLogger when ``enabled``, otherwise a no-op logger."""
    return RunLogger(run_name, log_dir, config) if enabled else NullRunLogger()
