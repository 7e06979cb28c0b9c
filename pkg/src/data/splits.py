"""Cloud, edge, and device datasets from one filtered check-in dataset."""

import logging
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from ..config import MAX_SEQUENCE_LENGTH, MIN_SEQUENCE_LENGTH, REGION_FRACTION
from ..errors import DataError
from ..numerics import Rng
from .geo import assign_regions
from .models import CheckInDataset, DeviceSequence, RegionData, RegionMap, TierSplits, Visit

logger = logging.getLogger(__name__)


def region_sequences(visits: list[Visit], assignment: dict[int, int]) -> dict[int, list[Visit]]:
    """Split one user's visits into per-region sequences, keeping their order."""
    out: dict[int, list[Visit]] = {}
    for visit in visits:
        out.setdefault(assignment[visit.poi_id], []).append(visit)
    return out


def held_out_positions(visits: list[Visit], assignment: dict[int, int]) -> set[int]:
    """Positions of the last two visits in each region: the val/test targets of every in-region sequence."""
    positions: dict[int, list[int]] = {}
    for i, visit in enumerate(visits):
        positions.setdefault(assignment[visit.poi_id], []).append(i)
    return {i for region_positions in positions.values() for i in region_positions[-2:]}


def build_tier_splits(
    ds: CheckInDataset,
    rm: RegionMap,
    region_fraction: float = REGION_FRACTION,
    seed: int = 0,
    max_seq_len: int = MAX_SEQUENCE_LENGTH,
    min_sequence_length: int = MIN_SEQUENCE_LENGTH,
) -> TierSplits:
    """Build the cloud, edge, and on-device datasets.

    Every user sequence is first cut to its most recent ``max_seq_len``
    events. Each user's in-region visits form one sequence per region, and
    the cloud takes the user's category sequence minus the last two events
    of every one of those sequences, so no val/test target reaches global
    training. Region sequences with at least ``min_sequence_length`` events
    are shuffled per region and the first ``round(region_fraction * n)`` go
    (without user ids) to the edge server, the rest stay on their devices.
    """
    if not 0.0 < region_fraction < 1.0:
        raise DataError(f"region_fraction must lie in (0, 1), got {region_fraction}")
    if max_seq_len < 3:
        raise DataError(f"max_seq_len must be at least 3, got {max_seq_len}")
    if min_sequence_length < 3:
        raise DataError("device sequences need at least 3 events for train/val/test targets")

    global_sequences: list[list[int]] = []
    per_region: dict[int, list[tuple[int, list[Visit]]]] = {r: [] for r in range(rm.k)}
    for user in ds.users:
        visits = ds.visits(user)[-max_seq_len:]
        held_out = held_out_positions(visits, rm.assignment)
        categories = [v.category_id for i, v in enumerate(visits) if i not in held_out]
        if len(categories) >= 2:
            global_sequences.append(categories)
        for region_id, seq in region_sequences(visits, rm.assignment).items():
            if len(seq) >= min_sequence_length:
                per_region[region_id].append((user, seq))

    pois = assign_regions(ds.pois, rm)
    rng = Rng(seed)
    regions: dict[int, RegionData] = {}
    for region_id, sequences in per_region.items():
        if not sequences:
            logger.warning("[REGIONS] Region %d has no usable sequences; skipping it", region_id)
            continue
        shuffled = rng.derive("split", region_id).shuffled(sequences)
        n_edge = int(region_fraction * len(shuffled) + 0.5)
        if n_edge == 0:
            logger.warning(
                "[REGIONS] Region %d has %d sequence(s), none left for edge training; skipping it",
                region_id, len(shuffled),
            )
            continue
        devices = [
            DeviceSequence(user_id=user, region_id=region_id, visits=seq)
            for user, seq in sorted(shuffled[n_edge:], key=lambda item: item[0])
        ]
        regions[region_id] = RegionData(
            region_id=region_id,
            pois=sorted((p for p in pois.values() if p.region_id == region_id), key=lambda p: p.id),
            edge_sequences=[seq for _, seq in shuffled[:n_edge]],
            device_sequences=devices,
        )
        logger.info(
            "[REGIONS] Region %d: %d edge sequence(s), %d device sequence(s)",
            region_id, n_edge, len(devices),
        )

    if not global_sequences:
        raise DataError("no category sequence is long enough for global training")
    return TierSplits(
        categories=ds.categories,
        global_sequences=global_sequences,
        regions=regions,
        region_map=rm,
        region_fraction=region_fraction,
        seed=seed,
        max_seq_len=max_seq_len,
    )


def write_splits(splits: TierSplits, path: Union[str, Path]) -> Path:
    """Persist splits as JSON so that stage commands see exactly these datasets."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(splits.model_dump_json(indent=1) + "\n", encoding="utf-8")
    return path


def read_splits(path: Union[str, Path]) -> TierSplits:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"splits file not found: {path} (run prepare-data first)")
    try:
        return TierSplits.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise DataError(f"{path}: not a valid splits file ({e.error_count()} error(s))") from None
