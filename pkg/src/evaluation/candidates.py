"""Candidate pools: the nearest unvisited POIs of the sequence's region."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..config import NUM_CANDIDATES
from ..data.geo import haversine_matrix
from ..data.models import Poi, Visit
from ..errors import CandidateError


@dataclass(frozen=True)
class CandidateSet:
    """Candidate POI ids, nearest first; the ground truth (if any) is always present."""

    poi_ids: tuple[int, ...]
    ground_truth: Optional[int] = None

    def __len__(self) -> int:
        return len(self.poi_ids)


def select_candidates(
    history: Sequence[Visit],
    region_pois: Sequence[Poi],
    H: int = NUM_CANDIDATES,
    ground_truth: Optional[int] = None,
) -> CandidateSet:
    """Up to ``H`` unvisited region POIs by distance to the last history POI.

    Distance ties go to the lower POI id. A ground truth outside the nearest
    ``H`` is appended at the end.

    Raises:
        CandidateError: If the region is empty or nothing can be recommended.
    """
    if not region_pois:
        raise CandidateError("the region has no POIs")
    if not history:
        raise CandidateError("history must not be empty")
    visited = {v.poi_id for v in history}
    unvisited = sorted((p for p in region_pois if p.id not in visited), key=lambda p: p.id)
    if not unvisited and ground_truth is None:
        raise CandidateError("every POI in the region has been visited")

    chosen: list[int] = []
    if unvisited:
        anchor = np.array([[history[-1].lat, history[-1].lon]])
        coords = np.array([(p.lat, p.lon) for p in unvisited])
        distances = haversine_matrix(anchor, coords)[0]
        ids = np.array([p.id for p in unvisited])
        order = np.lexsort((ids, distances))
        chosen = [int(ids[i]) for i in order[:H]]
    if ground_truth is not None and ground_truth not in chosen:
        chosen.append(int(ground_truth))
    return CandidateSet(poi_ids=tuple(chosen), ground_truth=ground_truth)
