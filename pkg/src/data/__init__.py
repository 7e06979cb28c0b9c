"""Check-in ingestion, region partitioning, tier splits, and synthetic data."""

from .geo import assign_regions, haversine, haversine_matrix, partition_regions
from .ingest import filter_min_interactions, load_checkins, write_checkins
from .models import (
    CheckIn,
    CheckInDataset,
    DeviceSequence,
    Poi,
    RegionData,
    RegionMap,
    TierSplits,
    Visit,
)
from .splits import build_tier_splits, held_out_positions, read_splits, region_sequences, write_splits
from .synthetic import SynthSpec, synth_generate

__all__ = [
    "CheckIn",
    "CheckInDataset",
    "DeviceSequence",
    "Poi",
    "RegionData",
    "RegionMap",
    "SynthSpec",
    "TierSplits",
    "Visit",
    "assign_regions",
    "build_tier_splits",
    "filter_min_interactions",
    "haversine",
    "haversine_matrix",
    "held_out_positions",
    "load_checkins",
    "partition_regions",
    "read_splits",
    "region_sequences",
    "synth_generate",
    "write_checkins",
    "write_splits",
]
