"""Edge-tier POI denoiser on top of a frozen global model.

Positions mix POI and category embeddings,
``z_m = e_{p_m} + gamma_cat * e_{c_m} + lam * (x_t + e_t)``, and the
attention logits get a spatiotemporal relation term built from two unit
embeddings scaled by pairwise distances (km) and time gaps (hours).
"""

from dataclasses import dataclass, field
from typing import ClassVar, Iterable, Optional, Sequence

import numpy as np

from ..config import CATEGORY_WEIGHT, SPATIAL_CLIP_KM, TEMPORAL_CLIP_HOURS
from ..data.geo import haversine_matrix
from ..data.models import Poi, Visit
from ..errors import ModelInputError
from ..numerics import Matrix, Node, Rng, Tape, ops
from .attention import attend
from .global_model import GlobalModel, inject_noise

BASE_PREFIX = "base."


@dataclass(eq=False)
class RegionModel:
    """Region model: a frozen ``base`` plus the region's trainable tensors."""

    base: GlobalModel
    region_id: int
    poi_ids: list[int]
    poi_categories: list[int]
    poi_coords: np.ndarray  # n x 2 (lat, lon), float64
    poi_emb: Matrix
    unit_spatial: Matrix
    unit_temporal: Matrix
    gamma_cat: float = CATEGORY_WEIGHT
    spatial_clip_km: float = SPATIAL_CLIP_KM
    temporal_clip_h: float = TEMPORAL_CLIP_HOURS
    _index: dict[int, int] = field(init=False, repr=False)

    TRAINABLE: ClassVar[tuple[str, ...]] = ("poi_emb", "unit_spatial", "unit_temporal")

    def __post_init__(self) -> None:
        if not (len(self.poi_ids) == len(self.poi_categories) == self.poi_emb.shape[0] == len(self.poi_coords)):
            raise ModelInputError("POI id, category, coordinate, and embedding tables differ in length")
        self._index = {pid: row for row, pid in enumerate(self.poi_ids)}

    @classmethod
    def initialize(
        cls,
        base: GlobalModel,
        region_id: int,
        pois: Sequence[Poi],
        gamma_cat: float = CATEGORY_WEIGHT,
        spatial_clip_km: float = SPATIAL_CLIP_KM,
        temporal_clip_h: float = TEMPORAL_CLIP_HOURS,
    ) -> "RegionModel":
        """Each POI embedding starts as its category's embedding; unit embeddings start at zero."""
        ordered = sorted(pois, key=lambda p: p.id)
        if not ordered:
            raise ModelInputError(f"region {region_id} has no POIs")
        categories = [p.category_id for p in ordered]
        return cls(
            base=base,
            region_id=region_id,
            poi_ids=[p.id for p in ordered],
            poi_categories=categories,
            poi_coords=np.array([(p.lat, p.lon) for p in ordered], dtype=np.float64),
            poi_emb=base.category_emb[base.rows(categories)].copy(),
            unit_spatial=np.zeros((1, base.d), dtype=base.dtype),
            unit_temporal=np.zeros((1, base.d), dtype=base.dtype),
            gamma_cat=gamma_cat,
            spatial_clip_km=spatial_clip_km,
            temporal_clip_h=temporal_clip_h,
        )

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def dtype(self) -> np.dtype:
        return self.poi_emb.dtype

    @property
    def num_pois(self) -> int:
        return len(self.poi_ids)

    def trainable_tensors(self) -> dict[str, Matrix]:
        return {name: getattr(self, name) for name in self.TRAINABLE}

    def tensors(self) -> dict[str, Matrix]:
        """Frozen base tensors under ``base.`` followed by the region's own."""
        out = {BASE_PREFIX + name: value for name, value in self.base.tensors().items()}
        out.update(self.trainable_tensors())
        return out

    def update(self, values: dict[str, Matrix]) -> None:
        for name, value in values.items():
            if name not in self.TRAINABLE:
                raise KeyError(f"{name} is not a trainable region tensor")
            setattr(self, name, value)

    def rows(self, poi_ids: Iterable[int]) -> list[int]:
        try:
            return [self._index[int(p)] for p in poi_ids]
        except KeyError as e:
            raise ModelInputError(f"POI {e.args[0]} is outside region {self.region_id}") from None

    def bind(self, tape: Tape, trainable: Iterable[str] = ()) -> dict[str, Node]:
        trainable = set(trainable)
        nodes = self.base.bind(tape, prefix=BASE_PREFIX)
        for name, value in self.trainable_tensors().items():
            nodes[name] = tape.leaf(value, name, requires_grad=name in trainable)
        return nodes

    def relation_deltas(self, history: Sequence[Visit]) -> tuple[np.ndarray, np.ndarray]:
        return relation_deltas(history, self.spatial_clip_km, self.temporal_clip_h)


def relation_deltas(
    history: Sequence[Visit],
    spatial_clip_km: float = SPATIAL_CLIP_KM,
    temporal_clip_h: float = TEMPORAL_CLIP_HOURS,
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise clipped distances (km) and absolute time gaps (hours), both M x M."""
    coords = np.array([(v.lat, v.lon) for v in history], dtype=np.float64)
    stamps = np.array([v.timestamp for v in history], dtype=np.float64)
    spatial = np.minimum(haversine_matrix(coords, coords), spatial_clip_km)
    np.fill_diagonal(spatial, 0.0)
    temporal = np.minimum(np.abs(stamps[:, None] - stamps[None, :]) / 3600.0, temporal_clip_h)
    return spatial, temporal


def spatiotemporal_matrix(
    history: Sequence[Visit],
    unit_spatial: Matrix,
    unit_temporal: Matrix,
    spatial_clip_km: float = SPATIAL_CLIP_KM,
    temporal_clip_h: float = TEMPORAL_CLIP_HOURS,
) -> np.ndarray:
    """Entry ``(a, b)`` is ``sum(ds_ab * unit_spatial + dt_ab * unit_temporal)``."""
    spatial, temporal = relation_deltas(history, spatial_clip_km, temporal_clip_h)
    return spatial * float(np.sum(unit_spatial)) + temporal * float(np.sum(unit_temporal))


def _relation_node(tape: Tape, deltas: tuple[np.ndarray, np.ndarray], nodes: dict[str, Node]) -> Node:
    spatial = tape.constant(deltas[0].astype(tape.dtype))
    temporal = tape.constant(deltas[1].astype(tape.dtype))
    return ops.add(
        ops.scale_by(spatial, ops.total_sum(nodes["unit_spatial"])),
        ops.scale_by(temporal, ops.total_sum(nodes["unit_temporal"])),
    )


def region_denoise(
    m: RegionModel,
    nodes: dict[str, Node],
    history: Sequence[Visit],
    x_t: Node,
    t: int,
    rng: Optional[Rng] = None,
    deltas: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> Node:
    """Tape-level forward pass. ``deltas`` may carry precomputed relation_deltas."""
    if not history:
        raise ModelInputError("history must not be empty")
    rows = m.rows(v.poi_id for v in history)
    base = m.base
    category_rows = base.rows(m.poi_categories[row] for row in rows)
    tape = x_t.tape

    z = ops.gather_rows(nodes["poi_emb"], rows)
    if m.gamma_cat != 0.0:
        z = ops.add(z, ops.scale(ops.gather_rows(nodes[BASE_PREFIX + "category_emb"], category_rows), m.gamma_cat))
    z = ops.add(z, inject_noise(tape, x_t, t, base.lam))
    relation = _relation_node(tape, deltas if deltas is not None else m.relation_deltas(history), nodes)
    return attend(
        z,
        nodes[BASE_PREFIX + "w_q"], nodes[BASE_PREFIX + "w_k"], nodes[BASE_PREFIX + "w_v"],
        relation=relation, dropout=base.dropout, rng=rng,
    )


def region_forward(
    m: RegionModel,
    x_t: Matrix,
    history: Sequence[Visit],
    t: int,
    deltas: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> Matrix:
    """Inference-mode x0_hat; every history POI must belong to the region."""
    tape = Tape(recording=False, dtype=m.dtype)
    nodes = m.bind(tape)
    x = tape.constant(np.asarray(x_t, dtype=m.dtype).reshape(1, -1))
    if x.cols != m.d:
        raise ModelInputError(f"x_t has width {x.cols}, model width is {m.d}")
    return region_denoise(m, nodes, history, x, t, deltas=deltas).value
