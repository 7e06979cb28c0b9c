"""Training hyperparameters shared by all three stages."""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import (
    BATCH_SIZE,
    CATEGORY_WEIGHT,
    DROPOUT,
    EMBEDDING_DIM,
    INIT_SCALE,
    LEARNING_RATE,
    MAX_DIFFUSION_STEP,
    MAX_EPOCHS,
    MAX_HISTORY,
    NEGATIVES,
    NOISE_WEIGHT,
    NUM_CANDIDATES,
    PATCH_INIT_GAIN,
    PATIENCE,
    REVERSE_STEPS,
    SPATIAL_CLIP_KM,
    STARTING_NOISE,
    TEMPORAL_CLIP_HOURS,
)


class TrainConfig(BaseModel):
    """Hyperparameters for diffusion training and inference."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    T: int = Field(default=MAX_DIFFUSION_STEP, ge=2, description="Maximum diffusion step")
    T_R: int = Field(default=REVERSE_STEPS, ge=1, description="Reverse steps at inference")
    w: float = Field(default=STARTING_NOISE, gt=0.0, lt=1.0, description="Starting-noise constant")
    eta: float = Field(default=LEARNING_RATE, gt=0.0, description="Learning rate")
    d: int = Field(default=EMBEDDING_DIM, ge=1, description="Embedding width")
    lam: float = Field(default=NOISE_WEIGHT, ge=0.0, description="Noise-incorporation weight")
    gamma_cat: float = Field(default=CATEGORY_WEIGHT, ge=0.0, description="Category weight in the region model")
    dropout: float = Field(default=DROPOUT, ge=0.0, lt=1.0)
    batch_size: int = Field(default=BATCH_SIZE, ge=1)
    max_epochs: int = Field(default=MAX_EPOCHS, ge=0)
    patience: int = Field(default=PATIENCE, ge=1, description="Epochs without validation improvement before stopping")
    restore_best: bool = Field(default=True, description="Return the parameters of the best validation epoch")
    negatives: int = Field(default=NEGATIVES, ge=1, description="Negatives per positive")
    seed: int = Field(default=0)
    optimizer: Literal["sgd", "adam"] = "sgd"
    loss_form: Literal["printed", "bce"] = "printed"
    max_history: int = Field(default=MAX_HISTORY, ge=1, description="History window per training example")
    init_scale: float = Field(default=INIT_SCALE, gt=0.0)
    patch_init_gain: float = Field(default=PATCH_INIT_GAIN, gt=0.0)
    spatial_clip_km: float = Field(default=SPATIAL_CLIP_KM, gt=0.0)
    temporal_clip_h: float = Field(default=TEMPORAL_CLIP_HOURS, gt=0.0)
    dtype: Literal["float32", "float64"] = "float32"
    num_samples: int = Field(default=1, ge=1, description="Reverse trajectories averaged per recommendation")
    candidates: int = Field(default=NUM_CANDIDATES, ge=1, description="Candidate pool size H")

    @model_validator(mode="after")
    def _check_steps(self) -> "TrainConfig":
        if self.T_R > self.T:
            raise ValueError(f"T_R ({self.T_R}) cannot exceed T ({self.T})")
        return self

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def train_fields(self) -> dict:
        """Only the TrainConfig fields, also for subclasses."""
        return {name: getattr(self, name) for name in TrainConfig.model_fields}
