"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The heavy fixtures (the
matched 500-episode-per-m evaluation) are shared across criteria 8-10.
"""

import math
import time

import numpy as np
import pytest

from multion import agents as A
from multion import episodes as E
from multion import harness as H
from multion import mapmem as M
from multion import metrics as MT
from multion import sim as S
from multion import world as W

import oracles

_SUITE_T0 = time.time()
WORKERS = 2

ORACLE = {"spec": "planner:oracle"}
ORACLE_EGO = {"spec": "planner:oracle_ego"}
OBJRECOG = {"spec": "planner:objrecog", "classifier_miss": 0.2, "classifier_confusion": 0.05}


def run_cfg(tmp, workers=WORKERS, **sim_over):
    return H.RunConfig(
        out_dir=str(tmp),
        workers=workers,
        sim=sim_over,
        agents=[{"spec": "rand"}],
        write_traces=False,
    )


# ---------------------------------------------------------------------------
# Criterion 1: metric algebra on 10,000 randomized records
# ---------------------------------------------------------------------------


def test_criterion_1_metric_algebra():
    t0 = time.time()
    rng = np.random.default_rng(1001)
    for _ in range(10_000):
        m = int(rng.integers(1, 4))
        l = int(rng.integers(0, m + 1))
        chain = rng.uniform(0.5, 25.0, m).tolist()
        p = float(rng.uniform(0.0, 80.0))
        rec = MT.EpisodeRecord(
            m=m,
            goals_found=l,
            path_length=p,
            chain=chain,
            termination="success" if l == m else "timeout",
        )
        s, prog, spl, ppl = MT.record_metrics(rec)
        assert spl <= s + 1e-12 and spl >= 0.0
        assert ppl <= prog + 1e-12 and ppl >= 0.0
        if s == 1 or m == 1:
            assert abs(ppl - spl) <= 1e-12
        lam = float(rng.uniform(0.01, 50.0))
        rec2 = MT.EpisodeRecord(
            m=m,
            goals_found=l,
            path_length=p * lam,
            chain=[c * lam for c in chain],
            termination=rec.termination,
        )
        _, _, spl2, ppl2 = MT.record_metrics(rec2)
        assert abs(spl2 - spl) <= 1e-12
        assert abs(ppl2 - ppl) <= 1e-12
    elapsed = time.time() - t0
    assert elapsed < 5.0
    print(f"\nACCEPTANCE 1 PASS: metric algebra on 10000 records ({elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# Criterion 2: geodesic field vs per-pair Dijkstra, exact
# ---------------------------------------------------------------------------


def test_criterion_2_geodesic_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(1002)
    checked = 0
    for _ in range(50):
        size = int(rng.integers(8, 21))
        world = oracles.random_world(rng, size=size, res=0.1, p_wall=0.2)
        free = ~world.occupancy
        ys, xs = np.where(free)
        i = rng.integers(len(xs))
        b = world.cell_center(int(xs[i]), int(ys[i]))
        field = W.geodesic_field(world, b, 0.0)
        best = oracles.dijkstra_pairs(free, world.cell_of(*b))
        for iy in range(world.height_cells):
            for ix in range(world.width_cells):
                if not free[iy, ix]:
                    assert field[iy, ix] == np.inf
                elif (ix, iy) in best:
                    a_, b_ = best[(ix, iy)]
                    assert field[iy, ix] == W.steps_to_meters(a_, b_, world.resolution)
                    checked += 1
                else:
                    assert field[iy, ix] == np.inf
    elapsed = time.time() - t0
    assert elapsed < 10.0
    print(f"ACCEPTANCE 2 PASS: geodesic fields match Dijkstra oracle exactly "
          f"({checked} cells, {elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# Criterion 3: reward telescoping and constants
# ---------------------------------------------------------------------------


def test_criterion_3_reward_telescoping():
    world = W.generate_world(1003, size_m=12.0, room_count=4, name="acc3")
    eset = E.generate_episode_set([world], per_world_count=10, m=1, split="t",
                                  base_seed=1003, d_max=10.0)
    rng = np.random.default_rng(1003)
    cfg = S.SimConfig()
    for rollout in range(200):
        ep = eset.episodes[rollout % len(eset.episodes)]
        state, _ = S.reset(ep, world, cfg)
        d_start = state.distance_to_goal()
        total_closer = 0.0
        for _ in range(40):
            res = S.step(state, int(rng.integers(0, 3)))  # motion only
            total_closer += res.reward - S.REWARD_SLACK
        assert abs(total_closer - (d_start - state.distance_to_goal())) < 1e-9
    # constants: slack on a turn, r_goal on a successful FOUND
    ep = eset.episodes[0]
    state, _ = S.reset(ep, world, cfg)
    assert S.step(state, S.TURN_LEFT).reward == pytest.approx(-0.01, abs=1e-15)
    goal = ep.goals[0][1]
    near = E.Episode(ep.world_id, (goal[0], goal[1], 0.0), ep.goals, ep.seed, ep.chain)
    state, _ = S.reset(near, world, cfg)
    assert S.step(state, S.FOUND).reward == pytest.approx(3.0 - 0.01, abs=1e-12)
    print("ACCEPTANCE 3 PASS: reward telescopes to 1e-9; r_goal=3.0, slack=-0.01")


# ---------------------------------------------------------------------------
# Criterion 4: FOUND budget semantics, exhaustive for b in 0..3
# ---------------------------------------------------------------------------


def test_criterion_4_found_budget_semantics():
    world = W.GridWorld(np.zeros((120, 120), dtype=bool), 0.1, name="acc4")
    ep = E.Episode("acc4", (2.05, 2.05, 0.0), [(1, (9.05, 9.05))], 0, [9.9])
    for budget in range(4):
        state, _ = S.reset(ep, world, S.SimConfig(found_budget=budget))
        for i in range(budget):
            S.step(state, S.FOUND)
            assert state.status == S.RUNNING, f"budget {budget}: ended at wrong FOUND {i + 1}"
        S.step(state, S.FOUND)
        assert state.status == S.FAILED_WRONG_FOUND
        assert state.wrong_found_count == budget + 1
    print("ACCEPTANCE 4 PASS: wrong-FOUND budgets 0..3 terminate exactly at b+1")


# ---------------------------------------------------------------------------
# Criterion 5: visibility and reveal soundness
# ---------------------------------------------------------------------------


def test_criterion_5_visibility_reveal():
    t0 = time.time()
    rng = np.random.default_rng(1005)
    geom = M.MapGeometry(8, 0.4)
    # 1000 adversarial wall placements: production never sees an
    # oracle-occluded cell (checked via set equality with the slab oracle)
    for _ in range(1000):
        world = oracles.random_world(rng, size=32, res=0.1, p_wall=float(rng.uniform(0.1, 0.3)))
        for _try in range(50):
            x = rng.uniform(0.3, world.width_m - 0.3)
            y = rng.uniform(0.3, world.height_m - 0.3)
            if W.is_navigable(world, x, y, 0.0):
                break
        else:
            continue
        pose = (x, y, float(rng.uniform(0, 360)))
        got = W.visible_cells(world, pose, 79.0, 2.5, geom)
        expect = oracles.visible_cells_slow(world, pose, 79.0, 2.5, geom)
        assert got == expect
    # 100 random walks: revealed set equals the union of per-step visibility,
    # and reveal is monotone
    walk_world = W.generate_world(1005, size_m=10.0, room_count=4, name="acc5")
    wgeom = M.MapGeometry.for_world(walk_world, 0.4)
    oracle_map = M.build_oracle_map(walk_world, [], wgeom)
    nav = walk_world.navigable_mask(0.1)
    ys, xs = np.where(nav)
    for _walk in range(100):
        revealed = M.GlobalMap.empty(wgeom)
        union = set()
        prev_known = 0
        for _step in range(12):
            i = rng.integers(len(xs))
            pose = (*walk_world.cell_center(int(xs[i]), int(ys[i])),
                    float(rng.integers(0, 12) * 30))
            vis = W.visible_cells(walk_world, pose, 79.0, 5.0, wgeom)
            union |= vis
            M.reveal(revealed, oracle_map, vis)
            known = int((revealed.occ != M.UNDISCOVERED).sum())
            assert known >= prev_known
            prev_known = known
        got = {
            (int(ix), int(iy))
            for iy, ix in zip(*np.where(revealed.occ != M.UNDISCOVERED))
        }
        expect = {c for c in union if oracle_map.occ[c[1], c[0]] != M.UNDISCOVERED}
        assert got == expect
    elapsed = time.time() - t0
    assert elapsed < 30.0
    print(f"ACCEPTANCE 5 PASS: occlusion sound over 1000 walls, reveal = union "
          f"over 100 walks ({elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# Criterion 6: projection / registration geometry
# ---------------------------------------------------------------------------


def test_criterion_6_projection_registration():
    rng = np.random.default_rng(1006)
    geom = M.MapGeometry(40, 0.8)
    n_rays = 31
    angles = np.linspace(-79 / 2, 79 / 2, n_rays)
    # landmark consistency across 100 random pose pairs
    for _ in range(100):
        landmark = (rng.uniform(10, 20), rng.uniform(10, 20))
        want = (int(landmark[0] // 0.8), int(landmark[1] // 0.8))
        for _pose in range(2):
            theta = float(rng.integers(0, 12) * 30)
            ray = int(rng.integers(0, n_rays))
            depth = float(rng.uniform(0.5, 5.5))
            ang = math.radians(theta + angles[ray])
            pose = (landmark[0] - depth * math.cos(ang),
                    landmark[1] - depth * math.sin(ang), theta)
            scan = np.full(n_rays, 10.0)
            scan[ray] = depth
            obs = S.Observation(scan, np.zeros(n_rays, dtype=int),
                                np.zeros(8, dtype=int), None)
            view = M.project_features(obs, cell_size=0.8)
            fmap = M.FeatureMap.empty(geom, 10)
            M.register(view, fmap, pose)
            cells = np.argwhere(fmap.feat[..., -1] != 0)
            assert len(cells) == 1
            iy, ix = cells[0]
            assert abs(int(ix) - want[0]) <= 1 and abs(int(iy) - want[1]) <= 1
    # element-wise max monotonicity over random projection streams
    fmap = M.FeatureMap.empty(geom, 10)
    prev = fmap.feat.copy()
    for _ in range(25):
        pose = (rng.uniform(5, 25), rng.uniform(5, 25), float(rng.integers(0, 12) * 30))
        obs = S.Observation(
            rng.uniform(0.3, 8.0, n_rays),
            rng.integers(0, 9, n_rays),
            np.zeros(8, dtype=int),
            None,
        )
        M.register(M.project_features(obs, cell_size=0.8), fmap, pose)
        assert (fmap.feat >= prev).all()
        prev = fmap.feat.copy()
    # cutoff enforcement
    over = S.Observation(np.array([6.0]), np.array([3]), np.zeros(8, dtype=int), None)
    assert not M.project_features(over).feat.any()
    under = S.Observation(np.array([5.59]), np.array([3]), np.zeros(8, dtype=int), None)
    assert M.project_features(under).feat.any()
    # exact right-angle crop equivalences
    gmap = M.GlobalMap.empty(M.MapGeometry(21, 0.4))
    gmap.occ = rng.integers(0, 3, (21, 21)).astype(np.uint8)
    gmap.obj = rng.integers(0, 9, (21, 21)).astype(np.int16)
    center = gmap.geometry.cell_center(10, 10)
    crop0 = M.ego_crop(gmap, (*center, 0.0), 7)
    for k, theta in enumerate((0.0, 90.0, 180.0, 270.0)):
        crop = M.ego_crop(gmap, (*center, theta), 7)
        assert np.array_equal(crop.occ, np.rot90(crop0.occ, k))
        assert np.array_equal(crop.obj, np.rot90(crop0.obj, k))
    print("ACCEPTANCE 6 PASS: projection/registration consistent, cutoff and "
          "right-angle crops exact")


# ---------------------------------------------------------------------------
# Criteria 7-10: planner evaluations (shared heavy fixtures)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def matched_worlds():
    return {
        f"acc-w{s}": W.generate_world(s, size_m=14.0, room_count=5, name=f"acc-w{s}")
        for s in (21, 22, 23, 24)
    }


@pytest.fixture(scope="module")
def matched_sets(matched_worlds):
    """500 3-ON episodes; 1-ON and 2-ON sets are their prefixes, so the sets
    are matched across m."""
    base = E.generate_episode_set(
        list(matched_worlds.values()), per_world_count=125, m=3, split="test",
        base_seed=808, d_min=2.0, d_max=12.0,
    )
    sets = {3: base}
    for m in (1, 2):
        eps = [
            E.Episode(ep.world_id, ep.start, ep.goals[:m], ep.seed, ep.chain[:m])
            for ep in base.episodes
        ]
        sets[m] = E.EpisodeSet(split="test", episodes=eps, config={**base.config, "m": m})
    return sets


@pytest.fixture(scope="module")
def matched_records(matched_worlds, matched_sets, tmp_path_factory):
    # A fixed 800-step limit (same for every m) keeps the prefix sets
    # comparable and puts real time pressure on exploration.
    cfg = run_cfg(tmp_path_factory.mktemp("acc8"), max_steps=800)
    out = {}
    for entry in (ORACLE, ORACLE_EGO, OBJRECOG):
        for m in (1, 2, 3):
            records, _ = H.evaluate_agent(cfg, entry, matched_sets[m], matched_worlds)
            out[(entry["spec"], m)] = records
    return out


def test_criterion_7_planner_completeness(tmp_path):
    t0 = time.time()
    worlds = {
        f"acc7-w{s}": W.generate_world(s, size_m=16.0, room_count=6, name=f"acc7-w{s}")
        for s in (31, 32)
    }
    eset = E.generate_episode_set(
        list(worlds.values()), per_world_count=100, m=3, split="test",
        base_seed=707, d_min=2.0, d_max=20.0,
    )
    cfg = run_cfg(tmp_path, workers=8)
    records, _ = H.evaluate_agent(cfg, ORACLE, eset, worlds)
    summ = MT.aggregate(records)
    wrong = sum(sum(r.wrong_found_before) for r in records)
    wrong += sum(1 for r in records if r.termination == "wrong_found")
    elapsed = time.time() - t0
    assert summ.count == 200
    assert summ.success == 1.0
    assert summ.spl >= 0.90
    assert wrong == 0
    assert elapsed < 120.0
    print(f"ACCEPTANCE 7 PASS: planner:oracle success=1.00 spl={summ.spl:.3f} "
          f"zero wrong FOUNDs on 200 episodes ({elapsed:.1f}s, 8 workers)")


def test_criterion_8_oracle_information_ordering(matched_records):
    succ = {
        (spec, m): MT.aggregate(records).success
        for (spec, m), records in matched_records.items()
    }
    for m in (1, 2, 3):
        assert succ[("planner:oracle", m)] >= succ[("planner:oracle_ego", m)]
        assert succ[("planner:oracle_ego", m)] >= succ[("planner:objrecog", m)]
    for spec in ("planner:oracle", "planner:oracle_ego", "planner:objrecog"):
        assert succ[(spec, 1)] >= succ[(spec, 2)] >= succ[(spec, 3)]
    table = "; ".join(
        f"{spec.split(':')[1]}: "
        + "/".join("%.2f" % succ[(spec, m)] for m in (1, 2, 3))
        for spec in ("planner:oracle", "planner:oracle_ego", "planner:objrecog")
    )
    print(f"ACCEPTANCE 8 PASS: ordering holds on 500 matched episodes per m ({table})")


def test_criterion_9_seen_vs_unseen_direction(matched_records):
    records = matched_records[("planner:oracle_ego", 3)]
    assert len(records) >= 500
    table = MT.seen_unseen_analysis(records)
    checked = 0
    for k in (2, 3):
        seen = table[k]["seen"]
        unseen = table[k]["unseen"]
        if seen["count"] == 0 or unseen["count"] == 0:
            continue
        assert seen["rate"] > unseen["rate"], (
            f"goal {k}: seen {seen['rate']:.3f} !> unseen {unseen['rate']:.3f}"
        )
        checked += 1
    assert checked >= 1
    desc = ", ".join(
        f"k={k}: seen {table[k]['seen']['rate']:.2f} (n={table[k]['seen']['count']}) > "
        f"unseen {table[k]['unseen']['rate']:.2f} (n={table[k]['unseen']['count']})"
        for k in (2, 3)
        if table[k]["seen"]["count"] and table[k]["unseen"]["count"]
    )
    print(f"ACCEPTANCE 9 PASS: seen stratum strictly higher ({desc})")


def test_criterion_10_found_budget_sweep(matched_worlds, matched_sets, tmp_path):
    # Full default step limit here: the budget, not the clock, must bind.
    eset = E.EpisodeSet("test", matched_sets[3].episodes[:200], matched_sets[3].config)
    succ = []
    for budget in (0, 1, 2, 3, 5):
        cfg = run_cfg(tmp_path, found_budget=budget)
        records, _ = H.evaluate_agent(cfg, OBJRECOG, eset, matched_worlds)
        succ.append(MT.aggregate(records).success)
    for a, b in zip(succ, succ[1:]):
        assert b >= a - 1e-12
    assert succ[-1] > succ[0]  # the budget must actually matter
    print("ACCEPTANCE 10 PASS: success non-decreasing over budgets 0,1,2,3,5: "
          + " -> ".join("%.2f" % s for s in succ))


# ---------------------------------------------------------------------------
# Criterion 11: determinism across worker counts, total runtime
# ---------------------------------------------------------------------------


def test_criterion_11_determinism_and_runtime(tmp_path):
    base = {
        "seed": 42,
        "worlds": {"count": 2, "size_m": 12.0, "room_count": 4},
        "episodes": {"per_world": 10, "m_values": [1, 2], "d_max": 10.0},
        "agents": [ORACLE, {"spec": "rand_oracle_found"}],
        "sim": {"max_steps": 800},
        "write_traces": False,
    }
    outputs = {}
    for workers in (1, 4, 8):
        cfg = H.RunConfig(out_dir=str(tmp_path / f"w{workers}"), workers=workers, **base)
        H.cmd_gen(cfg)
        H.cmd_eval(cfg)
        outputs[workers] = (
            (tmp_path / f"w{workers}" / "summaries" / "summary.csv").read_bytes()
        )
    assert outputs[1] == outputs[4] == outputs[8]
    elapsed = time.time() - _SUITE_T0
    assert elapsed < 600.0, f"acceptance suite took {elapsed:.0f}s"
    print(f"ACCEPTANCE 11 PASS: summaries byte-identical for workers 1/4/8; "
          f"suite finished in {elapsed:.0f}s")
