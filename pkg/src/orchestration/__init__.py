"""Three-tier training: cloud global model, edge region models, device patches."""

from .checkpoint import (
    GLOBAL_FILE,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    patch_file,
    read_checkpoint,
    region_file,
    save_checkpoint,
)
from .optim import Adam, Sgd, make_optimizer
from .pipeline import (
    TransferPair,
    TransferReport,
    checkpoint_provenance,
    compare_transfer,
    device_job,
    epochs_to_reach,
    region_job,
    report_config,
    run_jobs,
    run_pipeline,
)
from .report import FreezeAudit, PipelineReport, StageReport, metrics_table, write_pipeline_report
from .stages import device_examples, personalize_device, scratch_base, specialize_region, tensor_hash, train_global
from .train_config import TrainConfig
from .trainer import TrainResult, train_loop

__all__ = [
    "Adam",
    "Checkpoint",
    "FreezeAudit",
    "GLOBAL_FILE",
    "PipelineReport",
    "Sgd",
    "StageReport",
    "TrainConfig",
    "TrainResult",
    "TransferPair",
    "TransferReport",
    "checkpoint_provenance",
    "compare_transfer",
    "decode_checkpoint",
    "device_examples",
    "device_job",
    "encode_checkpoint",
    "epochs_to_reach",
    "load_checkpoint",
    "make_optimizer",
    "metrics_table",
    "model_from_checkpoint",
    "patch_file",
    "personalize_device",
    "read_checkpoint",
    "region_file",
    "region_job",
    "report_config",
    "run_jobs",
    "run_pipeline",
    "save_checkpoint",
    "scratch_base",
    "specialize_region",
    "tensor_hash",
    "train_global",
    "train_loop",
]
