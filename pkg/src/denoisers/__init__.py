"""The three denoisers, their shared attention block, and the training loss."""

from .attention import attend
from .embeddings import step_embedding
from .examples import TrainingExample, holdout_examples, sliding_examples
from .global_model import GlobalModel, global_denoise, global_forward
from .loss import LossForm, ce_loss, ce_loss_node, sample_negatives
from .patch_model import PatchModel, patch_denoise, patch_forward
from .region_model import (
    BASE_PREFIX,
    RegionModel,
    region_denoise,
    region_forward,
    relation_deltas,
    spatiotemporal_matrix,
)

__all__ = [
    "BASE_PREFIX",
    "GlobalModel",
    "LossForm",
    "PatchModel",
    "RegionModel",
    "TrainingExample",
    "attend",
    "ce_loss",
    "ce_loss_node",
    "global_denoise",
    "global_forward",
    "holdout_examples",
    "patch_denoise",
    "patch_forward",
    "region_denoise",
    "region_forward",
    "relation_deltas",
    "sample_negatives",
    "sliding_examples",
    "spatiotemporal_matrix",
    "step_embedding",
]
