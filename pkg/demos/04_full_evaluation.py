"""Full evaluation pipeline: generate datasets, evaluate agents in parallel,
sweep the wrong-FOUND budget, and emit the combined report.

Run from the repository root:  python demos/04_full_evaluation.py
Outputs land in runs/demo/. Equivalent CLI:

  multion gen        --config demos/demo_config.json
  multion eval       --config demos/demo_config.json
  multion sweep-found --config demos/demo_config.json --budgets 0,1,2
  multion report     --config demos/demo_config.json
"""

from pathlib import Path

from multion import harness as H

cfg = H.RunConfig(
    seed=5,
    out_dir="runs/demo",
    workers=2,
    worlds={"count": 2, "size_m": 12.0, "room_count": 4},
    episodes={"per_world": 8, "m_values": [1, 2, 3], "d_max": 10.0},
    sim={"max_steps": 1200},
    agents=[
        {"spec": "planner:oracle"},
        {"spec": "planner:oracle_ego"},
        {"spec": "planner:objrecog", "classifier_miss": 0.2, "classifier_confusion": 0.05},
        {"spec": "rand_oracle_found"},
    ],
)

manifest = H.cmd_gen(cfg)
n_worlds = sum(len(v) for v in manifest["worlds"].values())
print(f"generated {n_worlds} worlds and "
      f"{len(manifest['episodes']) * len(cfg.episodes['m_values'])} episode sets")

rows = H.cmd_eval(cfg)
print("\nper-agent summary (also in runs/demo/summaries/):")
for r in rows:
    print(f"  {r['agent']:34s} {r['m']}ON  success={r['success']:.2f} "
          f"spl={r['spl']:.2f}")

# The sweep evaluates its first configured agent, which should be one that
# emits occasional wrong FOUNDs (here: the noisy recognition planner).
sweep_cfg = H.RunConfig(**{
    **{k: getattr(cfg, k) for k in ("seed", "out_dir", "workers", "split",
                                    "worlds", "episodes", "sim", "map")},
    "agents": [cfg.agents[2]],
    "write_traces": False,
})
sweep = H.cmd_sweep_found_budget(sweep_cfg, [0, 1, 2])
print("\nwrong-FOUND budget sweep (noisy recognition agent, hardest m):")
for r in sweep:
    print(f"  budget {r['budget']}: success {r['success']:.2f}")

report = H.cmd_report(cfg)
print(f"\ncombined report: {report}")

trace = sorted(Path("runs/demo/traces/planner-oracle_ego/3on").glob("*.jsonl"))[0]
frames = H.cmd_replay(cfg, trace)
print(f"replay frames (world + revealed overlay + agent): {frames}")
