import logging
import math

import numpy as np
import pytest

from src.data.geo import haversine
from src.data.models import Poi, Visit
from src.denoisers import PatchModel
from src.diffusion import build_schedule
from src.errors import CandidateError, ConfigError, ModelInputError
from src.evaluation import (
    TrainedModels,
    bench,
    evaluate_all,
    hr_at_k,
    ndcg_at_k,
    rank_items,
    rank_of,
    recommend,
    recommend_category,
    select_candidates,
    summarize_ranks,
)
from src.numerics import Rng
from src.orchestration import personalize_device, specialize_region, train_global
from tests.factories import global_model, grid_pois, region_model, visits


class TestMetrics:
    def test_against_direct_formulas(self):
        ranks = np.random.default_rng(0).integers(1, 202, size=1000).tolist()
        summary = summarize_ranks(ranks)
        for k in (5, 10):
            assert summary[f"HR@{k}"] == np.mean([r <= k for r in ranks])
            expected = np.mean([1.0 / math.log2(r + 1) if r <= k else 0.0 for r in ranks])
            assert summary[f"NDCG@{k}"] == pytest.approx(expected, rel=1e-12)

    def test_single_values(self):
        assert hr_at_k(1, 5) == 1
        assert hr_at_k(6, 5) == 0
        assert ndcg_at_k(1, 10) == 1.0
        assert ndcg_at_k(3, 10) == pytest.approx(0.5)
        assert ndcg_at_k(11, 10) == 0.0
        with pytest.raises(ValueError):
            hr_at_k(0, 5)
        with pytest.raises(ValueError):
            ndcg_at_k(1, 0)

    def test_rank_of(self):
        assert rank_of([4, 2, 9], 9) == 3
        with pytest.raises(ValueError):
            rank_of([4, 2], 7)

    def test_empty_summary(self):
        assert summarize_ranks([]) == {"HR@5": 0.0, "HR@10": 0.0, "NDCG@5": 0.0, "NDCG@10": 0.0}

    def test_random_scorer_hits_at_chance(self):
        gen = np.random.default_rng(1)
        ids = list(range(201))
        hits = 0
        trials = 20_000
        for _ in range(trials):
            table = gen.normal(size=(201, 4))
            items, _ = rank_items(gen.normal(size=(1, 4)), table, ids)
            hits += hr_at_k(items.index(0) + 1, 10)
        assert abs(hits / trials - 10 / 201) < 0.006


class TestRanking:
    def test_ties_go_to_lower_id(self):
        items, scores = rank_items(np.ones((1, 2)), np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]]), [7, 3, 5])
        assert items == (5, 3, 7)
        assert scores == (2.0, 1.0, 1.0)


class TestCandidates:
    def test_nearest_unvisited_first(self):
        pois = grid_pois(20)
        history = visits(pois, [3, 8])
        anchor = (40.7255, -73.9912)
        history[-1] = Visit(99, 0, anchor[0], anchor[1], history[-1].timestamp)
        chosen = select_candidates(history, pois, H=6)
        unvisited = [p for p in pois if p.id not in {3, 99}]
        brute = sorted(unvisited, key=lambda p: (haversine(anchor, (p.lat, p.lon)), p.id))
        assert list(chosen.poi_ids) == [p.id for p in brute[:6]]

    def test_distance_ties_go_to_lower_id(self):
        pois = [Poi(id=i, category_id=0, lat=1.0, lon=1.0 if i % 2 == 0 else 2.0) for i in (5, 2, 3, 4)]
        history = visits([Poi(id=0, category_id=0, lat=1.0, lon=1.0)] + pois, [0])
        assert select_candidates(history, pois, H=4).poi_ids == (2, 4, 3, 5)

    def test_ground_truth_is_appended(self):
        pois = grid_pois(20)
        history = visits(pois, [0])
        chosen = select_candidates(history, pois, H=3, ground_truth=19)
        assert len(chosen) == 4
        assert chosen.poi_ids[-1] == 19
        assert 0 not in chosen.poi_ids

    def test_exhausted_region(self):
        pois = grid_pois(3)
        with pytest.raises(CandidateError):
            select_candidates(visits(pois, [0, 1, 2]), pois, H=5)
        assert select_candidates(visits(pois, [0, 1, 2]), pois, H=5, ground_truth=1).poi_ids == (1,)
        with pytest.raises(CandidateError):
            select_candidates([], pois)
        with pytest.raises(CandidateError):
            select_candidates(visits(pois, [0]), [])


class TestRecommend:
    @pytest.fixture
    def setup(self):
        pois = grid_pois(12, categories=3)
        m = region_model(pois, d=8)
        return pois, m, build_schedule(32, 1e-4)

    def test_deterministic(self, setup):
        pois, m, schedule = setup
        history = visits(pois, [0, 4, 7])
        a = recommend(m, None, history, schedule, 4, Rng(1), [1, 2, 3, 5, 9])
        b = recommend(m, None, history, schedule, 4, Rng(1), [1, 2, 3, 5, 9])
        assert a == b
        assert sorted(a.items) == [1, 2, 3, 5, 9]
        assert a.denoiser_calls == 4

    def test_single_candidate(self, setup):
        pois, m, schedule = setup
        ranked = recommend(m, None, visits(pois, [0]), schedule, 2, Rng(0), [6])
        assert ranked.rank_of(6) == 1
        assert ranked.top(10) == (6,)

    def test_samples_multiply_calls(self, setup):
        pois, m, schedule = setup
        ranked = recommend(m, None, visits(pois, [0, 1]), schedule, 8, Rng(0), [2, 3], num_samples=3)
        assert ranked.denoiser_calls == 24

    def test_bad_inputs(self, setup):
        pois, m, schedule = setup
        history = visits(pois, [0, 1])
        with pytest.raises(ModelInputError):
            recommend(m, None, history, schedule, 4, Rng(0), [])
        with pytest.raises(ModelInputError):
            recommend(m, None, history, schedule, 4, Rng(0), [2, 500])
        with pytest.raises(ModelInputError):
            recommend(m, PatchModel.initialize(0, 0, 4), history, schedule, 4, Rng(0), [2])

    def test_identity_patch_matches_region_model(self, setup):
        pois, m, schedule = setup
        history = visits(pois, [2, 5, 8])
        candidates = [0, 1, 3, 4, 6, 7, 9, 10, 11]
        patch = PatchModel.initialize(0, 0, 8, gain=0.05, dtype=np.float32)
        alone = recommend(m, None, history, schedule, 4, Rng(3), candidates)
        patched = recommend(m, patch, history, schedule, 4, Rng(3), candidates)
        alone_scores = dict(zip(alone.items, alone.scores))
        patched_scores = dict(zip(patched.items, patched.scores))
        for item in candidates:
            assert patched_scores[item] == pytest.approx(alone_scores[item], rel=1e-2, abs=1e-4)

    def test_category_recommendation(self):
        m = global_model(categories=5, d=8)
        ranked = recommend_category(m, [0, 3], build_schedule(16, 1e-4), 4, Rng(0))
        assert sorted(ranked.items) == [0, 1, 2, 3, 4]
        assert ranked.denoiser_calls == 4
        with pytest.raises(ModelInputError):
            recommend_category(m, [7], build_schedule(16, 1e-4), 4, Rng(0))


@pytest.fixture
def trained(tiny_splits, tiny_cfg) -> TrainedModels:
    base, _ = train_global(tiny_splits.global_sequences, tiny_splits.categories, tiny_cfg, Rng(1))
    models = TrainedModels(base)
    for region_id, region in tiny_splits.regions.items():
        models.regions[region_id], _ = specialize_region(base, region, tiny_cfg, Rng(2))
    return models


class TestEvaluateAll:
    def test_region_only(self, trained, tiny_splits, tiny_cfg):
        report = evaluate_all(trained, tiny_splits, tiny_cfg, use_patches=False)
        assert report.cases == len(tiny_splits.device_jobs())
        assert set(report.ranks) == {s.job_id for s in tiny_splits.device_jobs()}
        assert all(1 <= r <= tiny_cfg.candidates + 1 for r in report.ranks.values())
        assert report.missing_patches == []
        assert sum(report.per_region_cases.values()) == report.cases
        assert report.T_R == tiny_cfg.T_R

    def test_missing_patches_fall_back(self, trained, tiny_splits, tiny_cfg, caplog):
        seq = tiny_splits.device_jobs()[0]
        patch, _ = personalize_device(trained.regions[seq.region_id], seq, tiny_cfg, Rng(4))
        trained.patches[seq.job_id] = patch
        with caplog.at_level(logging.WARNING):
            report = evaluate_all(trained, tiny_splits, tiny_cfg, use_patches=True)
        expected_missing = [s.job_id for s in tiny_splits.device_jobs()[1:]]
        assert sorted(report.missing_patches) == sorted(expected_missing)
        assert "No patch model" in caplog.text

        region_only = evaluate_all(trained, tiny_splits, tiny_cfg, use_patches=False)
        for job in expected_missing:
            assert report.ranks[job] == region_only.ranks[job]

    def test_each_job_has_its_own_seed(self, trained, tiny_splits, tiny_cfg):
        everything = evaluate_all(trained, tiny_splits, tiny_cfg, use_patches=False)
        last = max(tiny_splits.regions)
        one_region = tiny_splits.model_copy(update={"regions": {last: tiny_splits.regions[last]}})
        subset = evaluate_all(trained, one_region, tiny_cfg, use_patches=False)
        assert subset.ranks == {job: rank for job, rank in everything.ranks.items() if job.endswith(f"@{last}")}

    def test_missing_region_model(self, trained, tiny_splits, tiny_cfg):
        trained.regions.pop(min(trained.regions))
        with pytest.raises(ModelInputError):
            evaluate_all(trained, tiny_splits, tiny_cfg)

    def test_from_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            TrainedModels.from_dir(tmp_path / "absent")


class TestBench:
    def test_rows_for_untrained_widths(self, tiny_splits, tiny_cfg):
        report = bench(None, tiny_cfg, [4, 8], [1, 2], tiny_splits, repeats=3)
        assert len(report.rows) == 4
        for row in report.rows:
            assert row.denoiser_calls == row.T_R
            assert row.hr_at_10 is None
            assert row.size_mb == pytest.approx(row.region_mb + row.patch_mb)
        assert report.row(8, 1).embedding_mb == 2 * report.row(4, 1).embedding_mb
        assert report.row(8, 2).region_mb > report.row(4, 2).region_mb
        assert "T_R" in report.render()

    def test_trained_width_reports_hit_rate(self, trained, tiny_splits, tiny_cfg):
        report = bench(trained, tiny_cfg, [tiny_cfg.d], [tiny_cfg.T_R], tiny_splits, repeats=2)
        row = report.row(tiny_cfg.d, tiny_cfg.T_R)
        assert 0.0 <= row.hr_at_10 <= 1.0

    def test_invalid_requests(self, tiny_splits, tiny_cfg):
        with pytest.raises(ConfigError):
            bench(None, tiny_cfg, [4], [tiny_cfg.T + 1], tiny_splits, repeats=1)
        with pytest.raises(ConfigError):
            bench(None, tiny_cfg, [4], [0], tiny_splits, repeats=1)
        with pytest.raises(ModelInputError):
            bench(None, tiny_cfg, [4], [1], None, repeats=1)
        with pytest.raises(KeyError):
            bench(None, tiny_cfg, [4], [1], tiny_splits, repeats=1).row(16, 1)
