"""Run configuration, dataset generation, parallel evaluation, and reports.

Every produced artifact embeds the config hash and tool version; reruns with
the same config overwrite with identical bytes. Parallel evaluation derives
each episode's randomness from (base seed, episode id), so results do not
depend on the worker count or scheduling.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, agents, metrics, sim
from .episodes import (
    EpisodeSet,
    episode_stats,
    generate_episode_set,
    load_episodes,
    save_episodes,
)
from .errors import ConfigError, TraceMismatch
from .mapmem import NAVIGABLE, UNDISCOVERED, MapGeometry
from .world import GridWorld, generate_world, load_world, world_to_text

SPLITS = ("train", "val", "test")
TRACE_VERSION = "v1"


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/out"
    workers: int = 1
    split: str = "test"
    worlds: dict = field(default_factory=dict)
    episodes: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    map: dict = field(default_factory=dict)
    agents: list = field(default_factory=lambda: [{"spec": "planner:oracle"}])
    write_traces: bool = True

    def __post_init__(self):
        self.worlds = {
            "count": 2,
            "size_m": 14.0,
            "corridor_width_m": 1.5,
            "room_count": 5,
            "resolution": 0.1,
            **self.worlds,
        }
        self.episodes = {
            "per_world": 25,
            "m_values": [1, 2, 3],
            "k": 8,
            "d_min": 2.0,
            "d_max": 20.0,
            **self.episodes,
        }
        self.map = {"cell_size": 0.4, **self.map}
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.agents:
            raise ConfigError("at least one agent must be configured")
        for a in self.agents:
            if "spec" not in a:
                raise ConfigError(f"agent entry missing 'spec': {a}")
        try:
            self.sim_config()
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad sim config: {e}") from e

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        known = {f_.name for f_ in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def canonical_json(self) -> str:
        payload = {
            "seed": self.seed,
            "split": self.split,
            "worlds": self.worlds,
            "episodes": self.episodes,
            "sim": self.sim,
            "map": self.map,
            "agents": self.agents,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]

    def sim_config(self) -> sim.SimConfig:
        return sim.SimConfig(**self.sim)

    def make_agent(self, entry: dict):
        params = {k: v for k, v in entry.items() if k != "spec"}
        return agents.make_policy(entry["spec"], **params)


def agent_label(entry: dict) -> str:
    base = entry["spec"].replace(":", "-")
    extras = [f"{k}={entry[k]}" for k in sorted(entry) if k != "spec"]
    return base + ("+" + ",".join(extras) if extras else "")


def _world_seed(cfg: RunConfig, split: str, index: int) -> int:
    return int.from_bytes(
        hashlib.sha256(f"{cfg.seed}:{split}:{index}".encode()).digest()[:4], "big"
    )


def _split_base_seed(cfg: RunConfig, split: str, m: int) -> int:
    return int.from_bytes(
        hashlib.sha256(f"{cfg.seed}:{split}:episodes:{m}".encode()).digest()[:4], "big"
    )


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> dict:
    """Generate disjoint per-split worlds plus episode sets for every m.

    Returns the manifest (also written to <out>/manifest.json).
    """
    out = Path(cfg.out_dir)
    (out / "worlds").mkdir(parents=True, exist_ok=True)
    (out / "episodes").mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": TRACE_VERSION,
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "worlds": {},
        "episodes": {},
    }
    wp = cfg.worlds
    for split in SPLITS:
        worlds = []
        for i in range(wp["count"]):
            seed = _world_seed(cfg, split, i)
            world = generate_world(
                seed,
                size_m=wp["size_m"],
                corridor_width_m=wp["corridor_width_m"],
                room_count=wp["room_count"],
                resolution=wp["resolution"],
                name=f"{split}-w{i}",
            )
            path = out / "worlds" / f"{world.name}.world"
            path.write_text(world_to_text(world), encoding="utf-8", newline="\n")
            worlds.append(world)
        manifest["worlds"][split] = [w.name for w in worlds]
        manifest["episodes"][split] = {}
        ep = cfg.episodes
        for m in ep["m_values"]:
            eset = generate_episode_set(
                worlds,
                per_world_count=ep["per_world"],
                m=m,
                split=split,
                base_seed=_split_base_seed(cfg, split, m),
                k=ep["k"],
                d_min=ep["d_min"],
                d_max=ep["d_max"],
            )
            eset.config["config_hash"] = cfg.config_hash()
            eset.config["tool_version"] = __version__
            path = out / "episodes" / f"{split}-{m}on.jsonl"
            save_episodes(eset, path)
            manifest["episodes"][split][str(m)] = str(path.relative_to(out))
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def load_manifest(cfg: RunConfig) -> dict:
    path = Path(cfg.out_dir) / "manifest.json"
    if not path.exists():
        raise ConfigError(f"no manifest at {path}; run gen first")
    return json.loads(path.read_text())


def load_split_worlds(cfg: RunConfig, manifest: dict, split: str) -> dict[str, GridWorld]:
    out = Path(cfg.out_dir)
    worlds = {}
    for name in manifest["worlds"][split]:
        text = (out / "worlds" / f"{name}.world").read_text(encoding="utf-8")
        worlds[name] = load_world(text, name=name)
    return worlds


def load_split_episodes(cfg: RunConfig, manifest: dict, split: str, m: int) -> EpisodeSet:
    out = Path(cfg.out_dir)
    rel = manifest["episodes"][split][str(m)]
    return load_episodes(out / rel)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_POOL_STATE: dict = {}


def _init_worker(worlds, sim_cfg, agent_entry, episodes, collect_traces):
    _POOL_STATE.update(
        worlds=worlds,
        sim_cfg=sim_cfg,
        agent_entry=agent_entry,
        episodes=episodes,
        collect_traces=collect_traces,
    )


def _run_one(index: int):
    st = _POOL_STATE
    episode = st["episodes"][index]
    world = st["worlds"][episode.world_id]
    policy = agents.make_policy(
        st["agent_entry"]["spec"],
        **{k: v for k, v in st["agent_entry"].items() if k != "spec"},
    )
    lines: list = []
    sink = lines.append if st["collect_traces"] else None
    record = sim.run_episode(
        policy, episode, world, st["sim_cfg"], trace_sink=sink, episode_index=index
    )
    return index, record, lines


def evaluate_agent(
    cfg: RunConfig,
    agent_entry: dict,
    eset: EpisodeSet,
    worlds: dict,
    collect_traces: bool = False,
):
    """Run one agent over an episode set, in parallel when configured.

    Returns (records, traces) with traces a list of per-episode line lists
    (empty when not collected). Results are ordered by episode index and do
    not depend on the worker count.
    """
    args = (worlds, cfg.sim_config(), agent_entry, eset.episodes, collect_traces)
    n = len(eset.episodes)
    if cfg.workers == 1 or n < 4:
        _init_worker(*args)
        results = [_run_one(i) for i in range(n)]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(cfg.workers, initializer=_init_worker, initargs=args) as pool:
            results = pool.map(_run_one, range(n), chunksize=max(1, n // (cfg.workers * 4)))
    results.sort(key=lambda r: r[0])
    records = [r[1] for r in results]
    traces = [r[2] for r in results]
    return records, traces


def _trace_header(cfg, agent_entry, eset, index):
    ep = eset.episodes[index]
    return {
        "version": TRACE_VERSION,
        "type": "trace",
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "agent": agent_entry,
        "split": eset.split,
        "m": ep.num_goals,
        "episode_index": index,
        "world_id": ep.world_id,
        "episode": {
            "world_id": ep.world_id,
            "seed": ep.seed,
            "start": list(ep.start),
            "goals": [[c, list(p)] for c, p in ep.goals],
            "chain": ep.chain,
        },
    }


def write_trace(path: Path, header: dict, lines: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for line in lines:
            f.write(json.dumps(line, sort_keys=True) + "\n")


def summary_csv(rows: list[dict], cfg: RunConfig) -> str:
    out = [
        f"# multion {__version__}",
        f"# config {cfg.config_hash()}",
        "agent,m,count,success,progress,spl,ppl",
    ]
    for r in rows:
        out.append(
            "%s,%d,%d,%.4f,%.4f,%.4f,%.4f"
            % (r["agent"], r["m"], r["count"], r["success"], r["progress"], r["spl"], r["ppl"])
        )
    return "\n".join(out) + "\n"


def summary_markdown(rows: list[dict], m_values: list[int]) -> str:
    """Aligned table shaped like the paper-style overview: one row per agent,
    Success/Progress/SPL/PPL columns per m."""
    agents_order = []
    for r in rows:
        if r["agent"] not in agents_order:
            agents_order.append(r["agent"])
    by_key = {(r["agent"], r["m"]): r for r in rows}
    heads = ["agent"]
    for metric in ("success", "progress", "spl", "ppl"):
        for m in m_values:
            heads.append(f"{metric}-{m}on")
    lines = ["| " + " | ".join(heads) + " |", "|" + "---|" * len(heads)]
    for a in agents_order:
        cells = [a]
        for metric in ("success", "progress", "spl", "ppl"):
            for m in m_values:
                r = by_key.get((a, m))
                cells.append("%.2f" % r[metric] if r else "-")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_eval(cfg: RunConfig) -> list[dict]:
    """Evaluate every configured agent on the split's episode sets.

    Writes per-episode traces and records plus CSV/markdown summaries;
    returns the summary rows.
    """
    manifest = load_manifest(cfg)
    worlds = load_split_worlds(cfg, manifest, cfg.split)
    out = Path(cfg.out_dir)
    rows = []
    for entry in cfg.agents:
        label = agent_label(entry)
        for m in cfg.episodes["m_values"]:
            eset = load_split_episodes(cfg, manifest, cfg.split, m)
            records, traces = evaluate_agent(
                cfg, entry, eset, worlds, collect_traces=cfg.write_traces
            )
            rec_dir = out / "records"
            rec_dir.mkdir(parents=True, exist_ok=True)
            with open(rec_dir / f"{label}-{m}on.jsonl", "w", encoding="utf-8", newline="\n") as f:
                f.write(
                    json.dumps(
                        {
                            "version": TRACE_VERSION,
                            "type": "records",
                            "tool_version": __version__,
                            "config_hash": cfg.config_hash(),
                            "agent": entry,
                            "m": m,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
                for rec in records:
                    f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
            if cfg.write_traces:
                tdir = out / "traces" / label / f"{m}on"
                tdir.mkdir(parents=True, exist_ok=True)
                for i, lines in enumerate(traces):
                    write_trace(tdir / f"{i:05d}.jsonl", _trace_header(cfg, entry, eset, i), lines)
            summ = metrics.aggregate(records)
            rows.append(
                {
                    "agent": label,
                    "m": m,
                    "count": summ.count,
                    "success": summ.success,
                    "progress": summ.progress,
                    "spl": summ.spl,
                    "ppl": summ.ppl,
                }
            )
    sdir = out / "summaries"
    sdir.mkdir(parents=True, exist_ok=True)
    (sdir / "summary.csv").write_text(summary_csv(rows, cfg), encoding="utf-8", newline="\n")
    (sdir / "summary.md").write_text(
        summary_markdown(rows, cfg.episodes["m_values"]), encoding="utf-8", newline="\n"
    )
    return rows


# ---------------------------------------------------------------------------
# sweep-found / cross-eval
# ---------------------------------------------------------------------------


def cmd_sweep_found_budget(cfg: RunConfig, budgets: list[int]) -> list[dict]:
    """Evaluate the first configured agent across wrong-FOUND budgets on the
    largest m; Success must be non-decreasing in the budget."""
    manifest = load_manifest(cfg)
    worlds = load_split_worlds(cfg, manifest, cfg.split)
    m = max(cfg.episodes["m_values"])
    eset = load_split_episodes(cfg, manifest, cfg.split, m)
    entry = cfg.agents[0]
    rows = []
    for budget in budgets:
        sweep_cfg = RunConfig(
            seed=cfg.seed,
            out_dir=cfg.out_dir,
            workers=cfg.workers,
            split=cfg.split,
            worlds=dict(cfg.worlds),
            episodes=dict(cfg.episodes),
            sim={**cfg.sim, "found_budget": int(budget)},
            map=dict(cfg.map),
            agents=cfg.agents,
            write_traces=False,
        )
        records, _ = evaluate_agent(sweep_cfg, entry, eset, worlds)
        summ = metrics.aggregate(records)
        rows.append(
            {
                "budget": int(budget),
                "agent": agent_label(entry),
                "m": m,
                "count": summ.count,
                "success": summ.success,
                "progress": summ.progress,
                "spl": summ.spl,
                "ppl": summ.ppl,
            }
        )
    for a, b in zip(rows, rows[1:]):
        if b["success"] < a["success"] - 1e-12:
            raise AssertionError(
                f"success not monotone in budget: {a['budget']}->{b['budget']} "
                f"{a['success']:.4f}->{b['success']:.4f}"
            )
    out = Path(cfg.out_dir) / "summaries"
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# multion {__version__}",
        f"# config {cfg.config_hash()}",
        "budget,agent,m,count,success,progress,spl,ppl",
    ]
    for r in rows:
        lines.append(
            "%d,%s,%d,%d,%.4f,%.4f,%.4f,%.4f"
            % (r["budget"], r["agent"], r["m"], r["count"],
               r["success"], r["progress"], r["spl"], r["ppl"])
        )
    (out / "found_budget_sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows


def cmd_cross_eval(cfg: RunConfig) -> dict:
    """Evaluate agents configured per-m on every other m's episode set.

    The fixed planner takes no m-specific training, so matrix rows coincide;
    the machinery still exercises the full grid and emits labeled matrices.
    """
    manifest = load_manifest(cfg)
    worlds = load_split_worlds(cfg, manifest, cfg.split)
    m_values = cfg.episodes["m_values"]
    entry = cfg.agents[0]
    matrix = {metric: {} for metric in ("success", "progress", "spl", "ppl")}
    for m_conf in m_values:  # agent "configured for" m_conf
        for m_eval in m_values:
            eset = load_split_episodes(cfg, manifest, cfg.split, m_eval)
            records, _ = evaluate_agent(cfg, entry, eset, worlds)
            summ = metrics.aggregate(records)
            for metric in matrix:
                matrix[metric][(m_conf, m_eval)] = getattr(summ, metric)
    out = Path(cfg.out_dir) / "summaries"
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# multion {__version__}", f"# config {cfg.config_hash()}"]
    for metric, cells in matrix.items():
        lines.append(f"## {metric}")
        lines.append("configured\\evaluated," + ",".join(f"{m}ON" for m in m_values))
        for m_conf in m_values:
            lines.append(
                f"{m_conf}ON,"
                + ",".join("%.4f" % cells[(m_conf, m_eval)] for m_eval in m_values)
            )
    (out / "cross_eval.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return matrix


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

_ACTION_IDS = {name: i for i, name in enumerate(sim.ACTION_NAMES)}


def cmd_replay(cfg: RunConfig, trace_path, out_path=None) -> str:
    """Re-simulate a trace and render text-art frames (one per step + the
    initial state). Raises TraceMismatch when the recorded poses or config
    hash do not match."""
    from .episodes import Episode

    with open(trace_path, encoding="utf-8") as f:
        lines = [json.loads(ln) for ln in f if ln.strip()]
    header, steps = lines[0], lines[1:]
    if header.get("type") != "trace" or header.get("version") != TRACE_VERSION:
        raise TraceMismatch("not a trace file")
    if header["config_hash"] != cfg.config_hash():
        raise TraceMismatch(
            f"trace config hash {header['config_hash']} != current {cfg.config_hash()}"
        )
    manifest = load_manifest(cfg)
    worlds = load_split_worlds(cfg, manifest, header["split"])
    world = worlds[header["world_id"]]
    epd = header["episode"]
    episode = Episode(
        world_id=epd["world_id"],
        start=tuple(epd["start"]),
        goals=[(c, tuple(p)) for c, p in epd["goals"]],
        seed=epd["seed"],
        chain=list(epd["chain"]),
    )
    policy = cfg.make_agent(header["agent"])
    sim_cfg = cfg.sim_config()
    state, obs = sim.reset(episode, world, sim_cfg)
    policy.on_reset(sim.EpisodeContext(world, episode, state.objects, sim_cfg))
    rng = np.random.default_rng([episode.seed, 1])
    geometry = MapGeometry.for_world(world, cfg.map["cell_size"])
    frames = [_render_frame(world, episode, state, policy, geometry, 0)]
    for i, rec in enumerate(steps, start=1):
        action = policy.act(obs, None, sim.TaskInfo(state), rng)
        result = sim.step(state, action)
        obs = result.observation
        if (
            sim.ACTION_NAMES[action] != rec["action"]
            or abs(state.pose.x - rec["x"]) > 1e-6
            or abs(state.pose.y - rec["y"]) > 1e-6
            or state.pose.theta != rec["theta"]
        ):
            raise TraceMismatch(f"re-simulation diverged at step {i}")
        frames.append(_render_frame(world, episode, state, policy, geometry, i))
    text = ("\n".join(frames)) + "\n"
    if out_path is None:
        out_path = str(trace_path) + ".replay.txt"
    Path(out_path).write_text(text, encoding="utf-8", newline="\n")
    if hasattr(policy, "map"):
        snap = policy.map.to_snapshot()
        snap["config_hash"] = cfg.config_hash()
        snap["tool_version"] = __version__
        Path(str(out_path) + ".map.json").write_text(
            json.dumps(snap, sort_keys=True) + "\n", encoding="utf-8"
        )
    return out_path


def _render_frame(world, episode, state, policy, geometry, t) -> str:
    """One text-art top-down frame at map resolution."""
    n = geometry.size_cells
    occ_labels = None
    if hasattr(policy, "map") and getattr(policy, "source", None) != "oracle":
        occ_labels = policy.map.occ
    grid = []
    for iy in range(n):
        row = []
        for ix in range(n):
            cx, cy = geometry.cell_center(ix, iy)
            if not world.in_bounds(cx, cy):
                ch = " "
            elif world.occupancy[world.cell_of(cx, cy)[1]][world.cell_of(cx, cy)[0]]:
                ch = "#"
            else:
                ch = "."
            if occ_labels is not None and ch == ".":
                lab = occ_labels[iy, ix]
                ch = "." if lab == NAVIGABLE else ("?" if lab == UNDISCOVERED else "#")
            row.append(ch)
        grid.append(row)
    for idx, (cat, pos) in enumerate(episode.goals):
        ix, iy = geometry.cell_of(*pos)
        if 0 <= ix < n and 0 <= iy < n:
            grid[iy][ix] = str(cat)
    ax, ay = geometry.cell_of(state.pose.x, state.pose.y)
    if 0 <= ax < n and 0 <= ay < n:
        grid[ay][ax] = "@"
    head = f"t={t} pose=({state.pose.x:.2f},{state.pose.y:.2f},{state.pose.theta:.0f}) goal={state.current_goal_index}"
    return head + "\n" + "\n".join("".join(r) for r in grid)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def record_from_trace(header: dict, lines: list[dict]) -> metrics.EpisodeRecord:
    """Rebuild an EpisodeRecord from a serialized trace; metrics recomputed
    from it equal the online values exactly."""
    m = header["m"]
    chain = list(header["episode"]["chain"])
    goals_found = lines[-1]["goal_index"] if lines else 0
    forwards = sum(
        1
        for ln in lines
        if ln["action"] == "forward" and "collision" not in (ln["event"] or "")
    )
    found_steps = [ln["t"] for ln in lines if "goal_found" in (ln["event"] or "")]
    last_event = lines[-1]["event"] or "" if lines else ""
    if goals_found == m:
        termination = "success"
    elif "timeout" in last_event:
        termination = "timeout"
    else:
        termination = "wrong_found"
    return metrics.EpisodeRecord(
        m=m,
        goals_found=goals_found,
        path_length=0.25 * forwards,
        chain=chain,
        termination=termination,
        found_steps=found_steps,
        steps=len(lines),
        world_id=header["world_id"],
        episode_index=header.get("episode_index", -1),
    )


def load_records(cfg: RunConfig, label: str, m: int) -> list[metrics.EpisodeRecord]:
    path = Path(cfg.out_dir) / "records" / f"{label}-{m}on.jsonl"
    with open(path, encoding="utf-8") as f:
        lines = [json.loads(ln) for ln in f if ln.strip()]
    return [metrics.EpisodeRecord.from_dict(d) for d in lines[1:]]


def cmd_report(cfg: RunConfig) -> str:
    """One markdown report: overall metric table, episode-distance histogram,
    seen-vs-unseen strata, conditional success vs the exponential expectation.
    Byte-identical when regenerated from the same inputs."""
    manifest = load_manifest(cfg)
    m_values = cfg.episodes["m_values"]
    parts = [
        "# multion evaluation report",
        "",
        f"- tool version: {__version__}",
        f"- config hash: {cfg.config_hash()}",
        f"- split: {cfg.split}",
        "",
        "## Overall metrics",
        "",
    ]
    rows = []
    for entry in cfg.agents:
        label = agent_label(entry)
        for m in m_values:
            recs = load_records(cfg, label, m)
            summ = metrics.aggregate(recs)
            rows.append(
                {
                    "agent": label,
                    "m": m,
                    "count": summ.count,
                    "success": summ.success,
                    "progress": summ.progress,
                    "spl": summ.spl,
                    "ppl": summ.ppl,
                }
            )
    parts.append(summary_markdown(rows, m_values))

    parts += ["## Episode distance histograms", ""]
    for m in m_values:
        eset = load_split_episodes(cfg, manifest, cfg.split, m)
        counts, edges = episode_stats(eset)
        parts.append(f"### {m}ON ({len(eset)} episodes)")
        parts.append("")
        parts.append("| bin (m) | count |")
        parts.append("|---|---|")
        for i, c in enumerate(counts):
            parts.append(f"| {edges[i]:.0f}-{edges[i + 1]:.0f} | {int(c)} |")
        parts.append("")

    biggest_m = max(m_values)
    parts += [f"## Seen vs unseen (goal k success, {biggest_m}ON)", ""]
    for entry in cfg.agents:
        label = agent_label(entry)
        recs = load_records(cfg, label, biggest_m)
        table = metrics.seen_unseen_analysis(recs)
        parts.append(f"### {label}")
        parts.append("")
        parts.append("| goal k | seen rate | seen n | unseen rate | unseen n |")
        parts.append("|---|---|---|---|---|")
        for k in sorted(table):
            seen = table[k]["seen"]
            unseen = table[k]["unseen"]
            sr = "-" if seen["rate"] is None else "%.3f" % seen["rate"]
            ur = "-" if unseen["rate"] is None else "%.3f" % unseen["rate"]
            parts.append(f"| {k} | {sr} | {seen['count']} | {ur} | {unseen['count']} |")
        parts.append("")

    parts += ["## Conditional success vs exponential expectation", ""]
    for entry in cfg.agents:
        label = agent_label(entry)
        summaries = {}
        for m in m_values:
            recs = load_records(cfg, label, m)
            summaries[m] = metrics.aggregate(recs)
        if 1 not in summaries:
            continue
        parts.append(f"### {label}")
        parts.append("")
        parts.append("| m | observed | expected Success(1)^m | at/below expectation |")
        parts.append("|---|---|---|---|")
        for row in metrics.conditional_success(summaries):
            parts.append(
                f"| {row['m']} | {row['observed']:.3f} | {row['expected']:.3f} "
                f"| {'yes' if row['at_or_below_expected'] else 'no'} |"
            )
        parts.append("")

    text = "\n".join(parts)
    out = Path(cfg.out_dir) / "report.md"
    out.write_text(text, encoding="utf-8", newline="\n")
    return str(out)
