"""Seeded planted-pattern check-in generator.

POIs are scattered around one center per region. Users live in a home
region and move according to the configured pattern:

- ``cyclic``: the next category is always ``(c + 1) % categories``.
- ``markov``: every POI has one preferred successor inside its region
  (a single random cycle over the region's POIs).
- ``uniform``: any POI of the current region.

On top of the pattern, ``personal_bias`` sends the user to one of their
own favorite POIs, ``noise`` replaces a move by a uniformly random
in-region POI, and ``travel_prob`` moves the user to another region.
"""

import math
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..config import MIN_INTERACTIONS
from ..errors import ConfigError, EmptyDatasetError, SynthSpecError
from ..numerics import Rng
from ..text_loader import load_key_values
from .ingest import filter_min_interactions
from .models import CheckIn, CheckInDataset, Poi

KM_PER_DEGREE = 111.195

Pattern = Literal["cyclic", "markov", "uniform"]


class SynthSpec(BaseModel):
    """Shape of a synthetic check-in dataset."""

    model_config = ConfigDict(extra="forbid")

    users: int = Field(ge=1, description="Number of users")
    pois: int = Field(ge=1, description="Number of POIs")
    categories: int = Field(ge=1, description="Number of categories")
    regions: int = Field(default=1, ge=1, description="Number of geographic POI clusters")
    pattern: Pattern = Field(default="cyclic", description="Planted transition pattern")
    noise: float = Field(default=0.0, ge=0.0, le=1.0, description="Chance of a uniformly random in-region move")
    checkins_per_user: int = Field(default=30, ge=2)
    poi_affinity: float = Field(
        default=0.0, ge=0.0, le=1.0,
        description="cyclic only: chance of the POI-level preferred successor instead of any next-category POI",
    )
    personal_bias: float = Field(default=0.0, ge=0.0, le=1.0, description="Chance of visiting a personal favorite")
    favorites: int = Field(default=0, ge=0, description="Favorite POIs per user, drawn from the home region")
    travel_prob: float = Field(default=0.0, ge=0.0, le=1.0, description="Chance of moving to another region")
    region_spread_km: float = Field(default=2.0, gt=0.0, description="Std of POI scatter around a region center")
    region_separation_km: float = Field(default=50.0, gt=0.0, description="Distance between adjacent region centers")
    center_lat: float = Field(default=40.7, ge=-80.0, le=80.0)
    center_lon: float = Field(default=-74.0, ge=-170.0, le=170.0)
    start_time: int = Field(default=1_333_238_400, ge=0, description="Unix seconds of the earliest check-in")
    mean_gap_hours: float = Field(default=6.0, gt=0.0)
    min_interactions: int = Field(default=MIN_INTERACTIONS, ge=1)
    seed: int = Field(default=0)

    @model_validator(mode="after")
    def _check_consistency(self) -> "SynthSpec":
        if self.pois < self.categories:
            raise ValueError(f"pois ({self.pois}) < categories ({self.categories})")
        if self.pois < self.regions:
            raise ValueError(f"pois ({self.pois}) < regions ({self.regions})")
        if self.pattern == "cyclic" and self.pois < self.categories * self.regions:
            raise ValueError("cyclic pattern needs every category in every region: pois >= categories * regions")
        if self.personal_bias > 0.0 and self.favorites == 0:
            raise ValueError("personal_bias > 0 needs favorites >= 1")
        if self.favorites > self.pois // self.regions:
            raise ValueError(f"favorites ({self.favorites}) exceeds POIs per region ({self.pois // self.regions})")
        return self

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SynthSpec":
        """Read a flat ``key = value`` synthetic spec."""
        try:
            return cls(**load_key_values(path))
        except ValidationError as e:
            raise SynthSpecError(f"{path}: {_first_error(e)}") from None
        except ConfigError as e:
            raise SynthSpecError(str(e)) from None

    @classmethod
    def build(cls, **values) -> "SynthSpec":
        """Construct and validate, raising SynthSpecError instead of ValidationError."""
        try:
            return cls(**values)
        except ValidationError as e:
            raise SynthSpecError(_first_error(e)) from None


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return f"{location}: {first['msg']}" if location else first["msg"]


class _World:
    """POI layout and the planted transition structure."""

    def __init__(self, spec: SynthSpec, rng: Rng) -> None:
        self.spec = spec
        layout = rng.derive("layout")
        self.pois: list[Poi] = []
        self.region_of = np.arange(spec.pois) % spec.regions
        self.members: list[list[int]] = [[] for _ in range(spec.regions)]
        self.by_category: dict[tuple[int, int], list[int]] = {}

        km_per_lon = KM_PER_DEGREE * math.cos(math.radians(spec.center_lat))
        offsets = layout.normal((spec.pois, 2)) * spec.region_spread_km
        for pid in range(spec.pois):
            region = int(self.region_of[pid])
            category = (pid // spec.regions) % spec.categories
            east_km = region * spec.region_separation_km + offsets[pid, 1]
            lat = round(spec.center_lat + offsets[pid, 0] / KM_PER_DEGREE, 6)
            lon = round(spec.center_lon + east_km / km_per_lon, 6)
            self.pois.append(Poi(id=pid, category_id=category, lat=lat, lon=lon))
            self.members[region].append(pid)
            self.by_category.setdefault((region, category), []).append(pid)

        self.successor: dict[int, int] = {}
        for region, members in enumerate(self.members):
            cycle = layout.derive("cycle", region).shuffled(members)
            for a, b in zip(cycle, cycle[1:] + cycle[:1]):
                self.successor[a] = b

    def next_poi(self, current: int, rng: Rng, favorites: list[int]) -> int:
        spec = self.spec
        region = int(self.region_of[current])
        if spec.regions > 1 and rng.uniform(1)[0] < spec.travel_prob:
            others = [r for r in range(spec.regions) if r != region]
            target = others[int(rng.integers(0, len(others)))]
            return self.pick(self.members[target], rng)
        if favorites and rng.uniform(1)[0] < spec.personal_bias:
            return self.pick(favorites, rng)
        if rng.uniform(1)[0] < spec.noise:
            return self.pick(self.members[region], rng)

        if spec.pattern == "markov":
            return self.successor[current]
        if spec.pattern == "cyclic":
            category = (self.pois[current].category_id + 1) % spec.categories
            options = self.by_category[(region, category)]
            if rng.uniform(1)[0] < spec.poi_affinity:
                rank = self.by_category[(region, self.pois[current].category_id)].index(current)
                return options[rank % len(options)]
            return self.pick(options, rng)
        return self.pick(self.members[region], rng)

    @staticmethod
    def pick(options: list[int], rng: Rng) -> int:
        return options[int(rng.integers(0, len(options)))]


def synth_generate(spec: SynthSpec, seed: Optional[int] = None) -> CheckInDataset:
    """Generate a planted-pattern dataset. The same spec and seed give the same dataset.

    Raises:
        EmptyDatasetError: If the interaction filter removes everything.
    """
    seed = spec.seed if seed is None else seed
    rng = Rng(seed).derive("synth")
    world = _World(spec, rng)

    sequences: dict[int, list[CheckIn]] = {}
    gap_seconds = spec.mean_gap_hours * 3600.0
    for user in range(spec.users):
        stream = rng.derive("user", user)
        home = user % spec.regions
        favorites = []
        if spec.favorites:
            picks = stream.choice(len(world.members[home]), spec.favorites, replace=False)
            favorites = [world.members[home][int(i)] for i in sorted(picks)]

        current = world.pick(world.members[home], stream)
        timestamp = spec.start_time + int(stream.integers(0, 86_400))
        checkins = [CheckIn(user, current, timestamp)]
        for _ in range(spec.checkins_per_user - 1):
            current = world.next_poi(current, stream, favorites)
            gap = -gap_seconds * math.log(1.0 - stream.uniform(1)[0])
            timestamp += max(1, int(math.ceil(gap)))
            checkins.append(CheckIn(user, current, timestamp))
        sequences[user] = checkins

    dataset = filter_min_interactions({p.id: p for p in world.pois}, sequences, spec.min_interactions)
    if not dataset.sequences:
        raise EmptyDatasetError(
            f"synthetic dataset is empty after the {spec.min_interactions}-interaction filter; "
            "raise users or checkins_per_user"
        )
    return dataset
