"""Check-in data models.

Classes:
    Poi: A venue with one category tag and coordinates.
    CheckIn: One timestamped visit by one user.
    Visit: A check-in resolved against its POI (what sequences store).
    CheckInDataset: Filtered, per-user chronologically sorted check-ins.
    RegionMap: k-means centroids and the POI -> region assignment.
    DeviceSequence: An on-device sequence with leave-one-out targets.
    RegionData: Everything one edge server and its devices see.
    TierSplits: Cloud, edge, and device datasets built from one CheckInDataset.
"""

from dataclasses import dataclass, field

from pydantic import BaseModel, ConfigDict, Field


class Poi(BaseModel):
    """A point of interest."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0, description="POI identifier")
    category_id: int = Field(ge=0, description="The single category tag of this POI")
    lat: float = Field(ge=-90.0, le=90.0, description="Latitude in degrees")
    lon: float = Field(ge=-180.0, le=180.0, description="Longitude in degrees")
    region_id: int | None = Field(default=None, description="Assigned region, None before partitioning")


@dataclass(frozen=True)
class CheckIn:
    user_id: int
    poi_id: int
    timestamp: int  # Unix seconds


@dataclass(frozen=True)
class Visit:
    poi_id: int
    category_id: int
    lat: float
    lon: float
    timestamp: int


@dataclass(frozen=True)
class CheckInDataset:
    """Users' check-in sequences plus the POI table they reference."""

    pois: dict[int, Poi]
    sequences: dict[int, list[CheckIn]] = field(default_factory=dict)

    @property
    def users(self) -> list[int]:
        return sorted(self.sequences)

    @property
    def categories(self) -> list[int]:
        return sorted({poi.category_id for poi in self.pois.values()})

    @property
    def num_checkins(self) -> int:
        return sum(len(seq) for seq in self.sequences.values())

    def visits(self, user_id: int) -> list[Visit]:
        """Check-in sequence of a user with POI attributes attached."""
        out = []
        for checkin in self.sequences[user_id]:
            poi = self.pois[checkin.poi_id]
            out.append(Visit(poi.id, poi.category_id, poi.lat, poi.lon, checkin.timestamp))
        return out

    def category_sequence(self, user_id: int) -> list[int]:
        """Category sequence of a user."""
        return [self.pois[c.poi_id].category_id for c in self.sequences[user_id]]


class RegionMap(BaseModel):
    """Result of partitioning POIs into regions."""

    centroids: list[tuple[float, float]] = Field(description="(lat, lon) per region id")
    assignment: dict[int, int] = Field(description="POI id -> region id")

    @property
    def k(self) -> int:
        return len(self.centroids)

    def members(self, region_id: int) -> list[int]:
        return sorted(pid for pid, rid in self.assignment.items() if rid == region_id)


class DeviceSequence(BaseModel):
    """A sequence that stays on the user's device.

    The last visit is the test target, the second-last the validation
    target, and everything before is personal training data.
    """

    user_id: int
    region_id: int
    visits: list[Visit]

    @property
    def train_visits(self) -> list[Visit]:
        return self.visits[:-2]

    @property
    def val_case(self) -> tuple[list[Visit], Visit]:
        return self.visits[:-2], self.visits[-2]

    @property
    def test_case(self) -> tuple[list[Visit], Visit]:
        return self.visits[:-1], self.visits[-1]

    @property
    def job_id(self) -> str:
        return f"{self.user_id}@{self.region_id}"


class RegionData(BaseModel):
    """Data held by one region's edge server and its users' devices."""

    region_id: int
    pois: list[Poi] = Field(description="Every POI assigned to this region, sorted by id")
    edge_sequences: list[list[Visit]] = Field(
        default_factory=list,
        description="Anonymized in-region sequences used for edge specialization"
    )
    device_sequences: list[DeviceSequence] = Field(default_factory=list)


class TierSplits(BaseModel):
    """Cloud, edge, and device datasets for one pipeline run."""

    categories: list[int] = Field(description="Every category id in the dataset, sorted")
    global_sequences: list[list[int]] = Field(
        description="Cloud category sequences with their last two events removed"
    )
    regions: dict[int, RegionData] = Field(default_factory=dict)
    region_map: RegionMap
    region_fraction: float
    seed: int
    max_seq_len: int

    def device_jobs(self) -> list[DeviceSequence]:
        jobs = [seq for region in self.regions.values() for seq in region.device_sequences]
        return sorted(jobs, key=lambda s: (s.region_id, s.user_id))
