"""Agents and metrics: run the planner family on matched episodes and score
them with Success / Progress / SPL / PPL.

Run from the repository root:  python demos/03_agents_and_metrics.py
(Takes a minute or two: it rolls out hundreds of episodes.)
"""

from multion import agents as A
from multion import episodes as E
from multion import metrics as MT
from multion import sim as S
from multion import world as W

worlds = [W.generate_world(s, size_m=12.0, room_count=4, name=f"demo-w{s}") for s in (3, 4)]
eset = E.generate_episode_set(worlds, per_world_count=15, m=3, split="demo",
                              base_seed=99, d_min=2.0, d_max=10.0)
by_name = {w.name: w for w in worlds}
cfg = S.SimConfig(max_steps=1200)

agents = [
    ("rand", A.make_policy("rand")),
    ("rand_oracle_found", A.make_policy("rand_oracle_found")),
    ("planner:objrecog (noisy)", A.make_policy(
        "planner:objrecog", classifier_miss=0.2, classifier_confusion=0.05)),
    ("planner:oracle_ego", A.make_policy("planner:oracle_ego")),
    ("planner:oracle", A.make_policy("planner:oracle")),
]

print(f"{len(eset)} 3-goal episodes on {len(worlds)} worlds, "
      f"step limit {cfg.max_steps}\n")
print(f"{'agent':28s} {'success':>8s} {'progress':>9s} {'spl':>6s} {'ppl':>6s}")
records_by_agent = {}
for name, policy in agents:
    records = [
        S.run_episode(policy, ep, by_name[ep.world_id], cfg, episode_index=i)
        for i, ep in enumerate(eset.episodes)
    ]
    records_by_agent[name] = records
    summ = MT.aggregate(records)
    print(f"{name:28s} {summ.success:8.2f} {summ.progress:9.2f} "
          f"{summ.spl:6.2f} {summ.ppl:6.2f}")

# -- remembering previously seen goals -----------------------------------------
print("\nseen-vs-unseen (did spotting a later goal early help reach it?)")
for name in ("planner:oracle_ego", "planner:objrecog (noisy)"):
    table = MT.seen_unseen_analysis(records_by_agent[name])
    for k in (2, 3):
        seen, unseen = table[k]["seen"], table[k]["unseen"]
        sr = "-" if seen["rate"] is None else f"{seen['rate']:.2f}"
        ur = "-" if unseen["rate"] is None else f"{unseen['rate']:.2f}"
        print(f"  {name:28s} goal {k}: seen {sr} (n={seen['count']}) "
              f"vs unseen {ur} (n={unseen['count']})")

# -- one annotated rollout -------------------------------------------------------
ep = eset.episodes[0]
world = by_name[ep.world_id]
lines = []
rec = S.run_episode(A.make_policy("planner:oracle"), ep, world, cfg,
                    trace_sink=lines.append)
founds = [ln for ln in lines if "goal_found" in (ln["event"] or "")]
print(f"\none oracle rollout: {rec.steps} steps, path {rec.path_length:.2f} m "
      f"vs optimal chain {sum(ep.chain):.2f} m")
for ln in founds:
    print(f"  t={ln['t']:4d}  declared goal {ln['goal_index']} found "
          f"at ({ln['x']:.2f}, {ln['y']:.2f}), reward {ln['reward']:.2f}")
