import itertools
import math

import numpy as np
import pytest

from multion import episodes as E
from multion import world as W
from multion.errors import SamplingExhausted, SchemaError


@pytest.fixture(scope="module")
def small_world():
    return W.generate_world(5, size_m=10.0, room_count=4)


class TestSampleEpisode:
    def test_categories_distinct(self, small_world):
        rng = np.random.default_rng(0)
        ep = E.sample_episode(small_world, k=8, m=3, rng=rng)
        cats = [c for c, _ in ep.goals]
        assert len(set(cats)) == 3
        assert all(1 <= c <= 8 for c in cats)

    def test_chain_within_band(self, small_world):
        rng = np.random.default_rng(1)
        for _ in range(10):
            ep = E.sample_episode(small_world, k=8, m=2, rng=rng, d_min=2.0, d_max=20.0)
            assert all(2.0 <= d <= 20.0 for d in ep.chain)

    def test_chain_recompute_exact(self, small_world):
        rng = np.random.default_rng(2)
        ep = E.sample_episode(small_world, k=8, m=3, rng=rng)
        anchor = (ep.start[0], ep.start[1])
        for (cat, pos), stored in zip(ep.goals, ep.chain):
            d = W.geodesic_distance(small_world, anchor, pos, 0.1)
            assert round(d, 6) == stored
            anchor = pos

    def test_goals_navigable_with_clearance(self, small_world):
        rng = np.random.default_rng(3)
        ep = E.sample_episode(small_world, k=8, m=3, rng=rng)
        for _, (gx, gy) in ep.goals:
            assert W.is_navigable(small_world, gx, gy, 0.1)

    def test_goal_separation(self, small_world):
        rng = np.random.default_rng(4)
        for _ in range(5):
            ep = E.sample_episode(small_world, k=8, m=3, rng=rng)
            for (c1, p1), (c2, p2) in itertools.combinations(ep.goals, 2):
                assert math.dist(p1, p2) >= E.GOAL_SEPARATION_M - 1e-9

    def test_infeasible_band_exhausts(self, small_world):
        rng = np.random.default_rng(5)
        with pytest.raises(SamplingExhausted):
            E.sample_episode(small_world, k=8, m=1, rng=rng, d_min=40.0, d_max=50.0, max_retries=5)

    def test_m_exceeds_k(self, small_world):
        rng = np.random.default_rng(6)
        with pytest.raises(ValueError):
            E.sample_episode(small_world, k=2, m=3, rng=rng)

    def test_start_theta_multiple_of_30(self, small_world):
        rng = np.random.default_rng(7)
        for _ in range(5):
            ep = E.sample_episode(small_world, k=8, m=1, rng=rng)
            assert ep.start[2] % 30.0 == 0.0

    def test_category_sequence_support_m1(self, small_world):
        rng = np.random.default_rng(8)
        seen = set()
        for _ in range(500):
            ep = E.sample_episode(small_world, k=8, m=1, rng=rng)
            seen.add(tuple(c for c, _ in ep.goals))
            if len(seen) == 8:
                break
        assert len(seen) == 8

    def test_category_sequence_support_m2(self, small_world):
        rng = np.random.default_rng(9)
        seen = set()
        for _ in range(2000):
            ep = E.sample_episode(small_world, k=8, m=2, rng=rng)
            seen.add(tuple(c for c, _ in ep.goals))
            if len(seen) == 56:
                break
        # C(8,2) * 2! ordered sequences
        assert len(seen) == 56


class TestGenerateEpisodeSet:
    def make_worlds(self):
        return [
            W.generate_world(31, size_m=10.0, room_count=4, name="train-a"),
            W.generate_world(32, size_m=10.0, room_count=4, name="train-b"),
        ]

    def test_cardinality(self):
        worlds = self.make_worlds()
        es = E.generate_episode_set(worlds, per_world_count=5, m=1, split="train", base_seed=7)
        assert len(es) == 10

    def test_deterministic_serialization(self):
        worlds = self.make_worlds()
        a = E.generate_episode_set(worlds, per_world_count=3, m=2, split="val", base_seed=9)
        b = E.generate_episode_set(worlds, per_world_count=3, m=2, split="val", base_seed=9)
        assert E.episodes_to_text(a) == E.episodes_to_text(b)

    def test_references_only_given_worlds(self):
        worlds = self.make_worlds()
        es = E.generate_episode_set(worlds, per_world_count=3, m=1, split="train", base_seed=1)
        assert {ep.world_id for ep in es.episodes} <= {w.name for w in worlds}

    def test_empty_worlds_rejected(self):
        with pytest.raises(ValueError):
            E.generate_episode_set([], 5, 1, "train", 0)


class TestEpisodeStats:
    def test_empty_set(self):
        counts, edges = E.episode_stats(E.EpisodeSet("test", []))
        assert counts.sum() == 0

    def test_single_episode_bin(self):
        ep = E.Episode("w", (1.0, 1.0, 0.0), [(1, (2.0, 2.0))], 0, [3.0, 4.0, 5.0])
        counts, edges = E.episode_stats(E.EpisodeSet("test", [ep]), bin_width=2.0)
        assert counts.sum() == 1
        assert counts[6] == 1  # 12 m falls in [12, 14)

    def test_counts_sum_to_set_size(self, small_world):
        es = E.generate_episode_set([small_world], per_world_count=8, m=2, split="t", base_seed=3)
        counts, _ = E.episode_stats(es)
        assert counts.sum() == len(es)

    def test_3on_longer_than_1on(self, small_world):
        one = E.generate_episode_set([small_world], per_world_count=15, m=1, split="t", base_seed=4)
        three = E.generate_episode_set([small_world], per_world_count=15, m=3, split="t", base_seed=4)
        mean1 = np.mean([ep.total_distance for ep in one.episodes])
        mean3 = np.mean([ep.total_distance for ep in three.episodes])
        assert mean3 > mean1


class TestPersistence:
    def test_roundtrip_exact(self, small_world, tmp_path):
        es = E.generate_episode_set([small_world], per_world_count=5, m=3, split="test", base_seed=11)
        p = tmp_path / "eps.jsonl"
        E.save_episodes(es, p)
        again = E.load_episodes(p)
        assert again == es

    def test_truncated_file(self, small_world, tmp_path):
        es = E.generate_episode_set([small_world], per_world_count=2, m=1, split="test", base_seed=12)
        p = tmp_path / "eps.jsonl"
        E.save_episodes(es, p)
        text = p.read_text()
        p.write_text(text[: len(text) - 20])
        with pytest.raises(SchemaError):
            E.load_episodes(p)

    def test_unknown_version_named(self, tmp_path):
        p = tmp_path / "eps.jsonl"
        p.write_text('{"version": "v9", "type": "episode-set", "split": "x", "config": {}}\n')
        with pytest.raises(SchemaError, match="v9"):
            E.load_episodes(p)

    def test_six_decimal_floats(self, small_world, tmp_path):
        es = E.generate_episode_set([small_world], per_world_count=1, m=1, split="test", base_seed=13)
        text = E.episodes_to_text(es)
        line = text.split("\n")[1]
        assert '"x": ' in line
        import re

        floats = re.findall(r'"(?:x|y|theta)": ([0-9.\-]+)', line)
        assert floats and all(len(f.split(".")[1]) == 6 for f in floats)
