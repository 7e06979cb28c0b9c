"""Great-circle distances and k-means region partitioning."""

import logging
from typing import Sequence

import numpy as np

from ..config import EARTH_RADIUS_KM, KMEANS_MAX_ITER
from ..errors import DataError
from ..numerics import Rng
from .models import Poi, RegionMap

logger = logging.getLogger(__name__)

LatLon = tuple[float, float]


def haversine(a: LatLon, b: LatLon) -> float:
    """Great-circle distance in kilometers between two (lat, lon) points."""
    return float(haversine_matrix(np.array([a]), np.array([b]))[0, 0])


def haversine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise distances (km) between rows of ``a`` (n x 2) and ``b`` (m x 2), in degrees."""
    lat1 = np.radians(a[:, 0])[:, None]
    lon1 = np.radians(a[:, 1])[:, None]
    lat2 = np.radians(b[:, 0])[None, :]
    lon2 = np.radians(b[:, 1])[None, :]
    sin_lat = np.sin((lat2 - lat1) * 0.5)
    sin_lon = np.sin((lon2 - lon1) * 0.5)
    c = sin_lat * sin_lat + np.cos(lat1) * np.cos(lat2) * sin_lon * sin_lon
    return 2.0 * EARTH_RADIUS_KM * np.arctan2(np.sqrt(c), np.sqrt(np.clip(1.0 - c, 0.0, None)))


def _spread_init(points: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """k-means++ seeding: each new centroid drawn proportionally to squared distance."""
    first = int(rng.integers(0, len(points)))
    centroids = [points[first]]
    closest = haversine_matrix(points, points[first:first + 1])[:, 0] ** 2
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            index = int(rng.integers(0, len(points)))
        else:
            index = int(np.searchsorted(np.cumsum(closest), rng.uniform(1)[0] * total, side="right"))
            index = min(index, len(points) - 1)
        centroids.append(points[index])
        closest = np.minimum(closest, haversine_matrix(points, points[index:index + 1])[:, 0] ** 2)
    return np.array(centroids)


def partition_regions(pois: Sequence[Poi], k: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER) -> RegionMap:
    """Lloyd's k-means on (lat, lon) with haversine assignment.

    Stops at an assignment fixpoint or after ``max_iter`` iterations. When
    every POI sits at the same coordinates, all go to region 0.
    """
    if k < 1:
        raise DataError(f"k must be positive, got {k}")
    if len(pois) < k:
        raise DataError(f"cannot split {len(pois)} POIs into {k} regions")

    ordered = sorted(pois, key=lambda p: p.id)
    points = np.array([(p.lat, p.lon) for p in ordered], dtype=np.float64)

    if k > 1 and len(np.unique(points, axis=0)) == 1:
        logger.warning("[REGIONS] All %d POIs share one location; assigning every POI to region 0", len(points))
        return RegionMap(
            centroids=[(float(points[0, 0]), float(points[0, 1]))],
            assignment={p.id: 0 for p in ordered},
        )

    rng = Rng(seed).derive("kmeans")
    centroids = _spread_init(points, k, rng)
    labels = np.full(len(points), -1)
    for iteration in range(max_iter):
        new_labels = np.argmin(haversine_matrix(points, centroids), axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for region in range(k):
            members = points[labels == region]
            if len(members):
                centroids[region] = members.mean(axis=0)
    logger.info("[REGIONS] k-means finished after %d iteration(s)", iteration + 1)

    return RegionMap(
        centroids=[(float(lat), float(lon)) for lat, lon in centroids],
        assignment={p.id: int(label) for p, label in zip(ordered, labels)},
    )


def assign_regions(pois: dict[int, Poi], region_map: RegionMap) -> dict[int, Poi]:
    """Copies of ``pois`` with ``region_id`` filled in from ``region_map``."""
    return {
        pid: poi.model_copy(update={"region_id": region_map.assignment[pid]})
        for pid, poi in pois.items()
    }
