import pytest

from src.data import SynthSpec, build_tier_splits, partition_regions, synth_generate
from src.data.models import TierSplits
from src.orchestration import TrainConfig


@pytest.fixture
def tiny_cfg() -> TrainConfig:
    """A configuration that trains every stage in well under a second."""
    return TrainConfig(
        T=32, T_R=4, d=8, max_epochs=2, patience=2, negatives=4, batch_size=8, max_history=4,
        dropout=0.1, optimizer="adam", eta=0.01, candidates=10, seed=3,
    )


@pytest.fixture(scope="session")
def tiny_splits() -> TierSplits:
    """Two regions, three edge and three device sequences each."""
    spec = SynthSpec.build(
        users=12, pois=16, categories=4, regions=2, pattern="markov", noise=0.1,
        checkins_per_user=14, favorites=1, personal_bias=0.3, min_interactions=2, seed=0,
    )
    dataset = synth_generate(spec)
    region_map = partition_regions(list(dataset.pois.values()), 2, seed=0)
    return build_tier_splits(dataset, region_map, 0.5, seed=0, max_seq_len=200, min_sequence_length=3)
