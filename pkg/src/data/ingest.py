"""Check-in CSV reading, writing, and interaction filtering.

CSV contract: UTF-8, header ``user_id,poi_id,category_id,lat,lon,timestamp``,
timestamps in integer Unix seconds, any row order.
"""

import logging
from pathlib import Path
from typing import Union

import pandas as pd
from pydantic import ValidationError

from ..config import MIN_INTERACTIONS
from ..errors import CheckInFormatError, EmptyDatasetError
from .models import CheckIn, CheckInDataset, Poi

logger = logging.getLogger(__name__)

COLUMNS = ["user_id", "poi_id", "category_id", "lat", "lon", "timestamp"]


def _parse_int(text: str, column: str, line: int) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise CheckInFormatError(f"{column} is not an integer: {text!r}", line) from None
    if value < 0 and column != "timestamp":
        raise CheckInFormatError(f"{column} must be non-negative, got {value}", line)
    return value


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise CheckInFormatError(f"{column} is not a number: {text!r}", line) from None


def _read_rows(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise CheckInFormatError("file is empty", 1) from None
    except pd.errors.ParserError as e:
        raise CheckInFormatError(f"malformed CSV: {e}") from None
    except UnicodeDecodeError as e:
        raise CheckInFormatError(f"file is not UTF-8: {e}") from None

    header = [str(c).strip() for c in frame.columns]
    if header != COLUMNS:
        raise CheckInFormatError(f"expected header {','.join(COLUMNS)}, got {','.join(header)}", 1)
    frame.columns = COLUMNS
    return frame


def filter_min_interactions(
    pois: dict[int, Poi],
    sequences: dict[int, list[CheckIn]],
    min_interactions: int = MIN_INTERACTIONS,
) -> CheckInDataset:
    """Drop users and POIs with fewer than ``min_interactions`` check-ins, repeating until stable."""
    sequences = {user: list(seq) for user, seq in sequences.items()}
    rounds = 0
    while True:
        rounds += 1
        poi_counts: dict[int, int] = {}
        for seq in sequences.values():
            for checkin in seq:
                poi_counts[checkin.poi_id] = poi_counts.get(checkin.poi_id, 0) + 1
        weak_pois = {pid for pid, count in poi_counts.items() if count < min_interactions}
        weak_users = {user for user, seq in sequences.items() if len(seq) < min_interactions}
        if not weak_pois and not weak_users:
            break
        sequences = {
            user: [c for c in seq if c.poi_id not in weak_pois]
            for user, seq in sequences.items()
            if user not in weak_users
        }
        sequences = {user: seq for user, seq in sequences.items() if seq}

    kept_pois = {c.poi_id for seq in sequences.values() for c in seq}
    logger.debug("[DATA] Interaction filter reached its fixpoint after %d round(s)", rounds)
    return CheckInDataset(
        pois={pid: pois[pid] for pid in sorted(kept_pois)},
        sequences=dict(sorted(sequences.items())),
    )


def load_checkins(path: Union[str, Path], min_interactions: int = MIN_INTERACTIONS) -> CheckInDataset:
    """Parse a check-in CSV into per-user chronologically sorted sequences.

    Args:
        path: CSV file following the check-in contract.
        min_interactions: Users and POIs below this count are removed
            iteratively until no more removals happen.

    Returns:
        The filtered dataset.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        CheckInFormatError: On a malformed row, with its 1-based file line.
        EmptyDatasetError: If filtering leaves nothing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"check-in file not found: {path}")
    frame = _read_rows(path)

    pois: dict[int, Poi] = {}
    sequences: dict[int, list[CheckIn]] = {}
    for row_index, row in enumerate(frame.itertuples(index=False)):
        line = row_index + 2  # header is line 1
        user_id = _parse_int(row.user_id, "user_id", line)
        poi_id = _parse_int(row.poi_id, "poi_id", line)
        category_id = _parse_int(row.category_id, "category_id", line)
        lat = _parse_float(row.lat, "lat", line)
        lon = _parse_float(row.lon, "lon", line)
        timestamp = _parse_int(row.timestamp, "timestamp", line)

        try:
            poi = Poi(id=poi_id, category_id=category_id, lat=lat, lon=lon)
        except ValidationError as e:
            raise CheckInFormatError(f"invalid POI: {e.errors()[0]['msg']}", line) from None
        known = pois.get(poi_id)
        if known is None:
            pois[poi_id] = poi
        elif known != poi:
            raise CheckInFormatError(
                f"POI {poi_id} redefined with different category or coordinates", line
            )
        sequences.setdefault(user_id, []).append(CheckIn(user_id, poi_id, timestamp))

    for seq in sequences.values():
        seq.sort(key=lambda c: c.timestamp)  # stable: ties keep file order

    raw_rows = len(frame)
    dataset = filter_min_interactions(pois, sequences, min_interactions)
    if not dataset.sequences:
        raise EmptyDatasetError(
            f"no check-ins left in {path} after the {min_interactions}-interaction filter "
            f"({raw_rows} rows read)"
        )
    logger.info(
        "[DATA] Loaded %d check-ins (%d users, %d POIs) from %s",
        dataset.num_checkins, len(dataset.sequences), len(dataset.pois), path,
    )
    return dataset


def write_checkins(dataset: CheckInDataset, path: Union[str, Path]) -> Path:
    """Write ``dataset`` in the check-in CSV contract (rows grouped by user, then time)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for user in dataset.users:
        for checkin in dataset.sequences[user]:
            poi = dataset.pois[checkin.poi_id]
            rows.append((user, poi.id, poi.category_id, poi.lat, poi.lon, checkin.timestamp))
    frame = pd.DataFrame(rows, columns=COLUMNS)
    # repr-precision floats so a reload reproduces the coordinates exactly
    frame.to_csv(path, index=False, float_format=None, lineterminator="\n")
    return path
