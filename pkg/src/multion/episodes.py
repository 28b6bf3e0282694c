"""Episode sampling under geodesic constraints, dataset splits, persistence.

An episode fixes a start pose plus an ordered list of goal objects whose
consecutive geodesic leg lengths all fall inside a configured band. All
serialized floats are quantized to 6 decimal places at creation time so that
save/load round-trips and chain recomputation are exact.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import SamplingExhausted, SchemaError
from .world import DEFAULT_AGENT_RADIUS, GridWorld, ObjectInstance, steps_to_meters

EPISODE_FILE_VERSION = "v1"
DEFAULT_NUM_CATEGORIES = 8
DEFAULT_D_MIN = 2.0
DEFAULT_D_MAX = 20.0
GOAL_WALL_CLEARANCE = 0.5
GOAL_SEPARATION_M = 1.2  # keeps goals in distinct map-memory cells
THETA_STEP_DEG = 30.0


@dataclass
class Episode:
    world_id: str
    start: tuple[float, float, float]  # x, y, theta
    goals: list[tuple[int, tuple[float, float]]]  # (category, position)
    seed: int
    chain: list[float]  # geodesic leg lengths start->g1->...->gm

    @property
    def num_goals(self) -> int:
        return len(self.goals)

    @property
    def total_distance(self) -> float:
        return sum(self.chain)

    def objects(self) -> list[ObjectInstance]:
        return [ObjectInstance(cat, pos) for cat, pos in self.goals]


@dataclass
class EpisodeSet:
    split: str
    episodes: list[Episode]
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.episodes)


def _q6(x: float) -> float:
    return round(float(x), 6)


def goal_cell_mask(world: GridWorld, agent_radius: float, clearance: float) -> np.ndarray:
    """Navigable cells whose centers keep the given clearance from walls
    (clearance measured center-to-center, which suffices for placement)."""
    nav = world.navigable_mask(agent_radius)
    dist = ndimage.distance_transform_edt(~world.occupancy, sampling=world.resolution)
    return nav & (dist >= clearance)


def sample_episode(
    world: GridWorld,
    k: int,
    m: int,
    rng: np.random.Generator,
    d_min: float = DEFAULT_D_MIN,
    d_max: float = DEFAULT_D_MAX,
    max_retries: int = 100,
    agent_radius: float = DEFAULT_AGENT_RADIUS,
    clearance: float = GOAL_WALL_CLEARANCE,
    seed: int = 0,
) -> Episode:
    """Sample one episode: uniform start cell, then per leg a uniform draw
    over the goal-eligible cells inside the distance band from the anchor.

    Raises SamplingExhausted when no attempt out of ``max_retries`` finds a
    feasible goal chain (world too small for the band).
    """
    if m > k:
        raise ValueError(f"m={m} exceeds category count k={k}")
    nav = world.navigable_mask(agent_radius)
    nav_cells = np.argwhere(nav)  # (iy, ix) rows
    if len(nav_cells) == 0:
        raise SamplingExhausted(f"world {world.name!r} has no navigable cells")
    goal_ok = goal_cell_mask(world, agent_radius, clearance)
    if not goal_ok.any():
        raise SamplingExhausted(f"world {world.name!r} has no goal-eligible cells")

    res = world.resolution
    cx_grid = (np.arange(world.width_cells) + 0.5) * res
    cy_grid = (np.arange(world.height_cells) + 0.5) * res
    cxs, cys = np.meshgrid(cx_grid, cy_grid)
    sep2 = GOAL_SEPARATION_M**2

    for _ in range(max_retries):
        iy, ix = nav_cells[rng.integers(len(nav_cells))]
        start_cell = (int(ix), int(iy))
        theta = float(rng.integers(0, 12)) * THETA_STEP_DEG
        categories = (rng.permutation(k)[:m] + 1).tolist()
        anchor = start_cell
        goal_cells: list[tuple[int, int]] = []
        chain: list[float] = []
        for _leg in range(m):
            stra, diag = world.geodesic_step_field(anchor, agent_radius)
            dist = steps_to_meters(
                stra.astype(np.float64), diag.astype(np.float64), world.resolution
            )
            dist[stra < 0] = np.inf
            band = goal_ok & (dist >= d_min) & (dist <= d_max)
            # Keep goals apart so each occupies its own map-memory cell.
            for gx_c, gy_c in goal_cells:
                band &= (cxs - (gx_c + 0.5) * res) ** 2 + (cys - (gy_c + 0.5) * res) ** 2 >= sep2
            idxs = np.flatnonzero(band)
            if len(idxs) == 0:
                break
            flat = int(idxs[rng.integers(len(idxs))])
            gy, gx = divmod(flat, world.width_cells)
            cell = (int(gx), int(gy))
            goal_cells.append(cell)
            chain.append(_q6(dist[gy, gx]))
            anchor = cell
        if len(goal_cells) == m:
            sx, sy = world.cell_center(*start_cell)
            goals = []
            for cat, cell in zip(categories, goal_cells):
                gx, gy = world.cell_center(*cell)
                goals.append((int(cat), (_q6(gx), _q6(gy))))
            return Episode(
                world_id=world.name,
                start=(_q6(sx), _q6(sy), theta),
                goals=goals,
                seed=seed,
                chain=chain,
            )
    raise SamplingExhausted(
        f"world {world.name!r}: no feasible {m}-goal chain in [{d_min}, {d_max}] m "
        f"after {max_retries} attempts"
    )


def episode_seed(base_seed: int, world_id: str, index: int) -> int:
    """Stable per-episode seed derived from (base_seed, world_id, index)."""
    return zlib.crc32(f"{base_seed}:{world_id}:{index}".encode())


def generate_episode_set(
    worlds: list[GridWorld],
    per_world_count: int,
    m: int,
    split: str,
    base_seed: int,
    k: int = DEFAULT_NUM_CATEGORIES,
    d_min: float = DEFAULT_D_MIN,
    d_max: float = DEFAULT_D_MAX,
    max_retries: int = 100,
    agent_radius: float = DEFAULT_AGENT_RADIUS,
) -> EpisodeSet:
    """Deterministic episode set: each episode draws from its own seeded
    stream derived from (base_seed, world_id, index)."""
    if not worlds:
        raise ValueError("worlds must be non-empty")
    episodes = []
    for world in worlds:
        for i in range(per_world_count):
            seed = episode_seed(base_seed, world.name, i)
            rng = np.random.default_rng(seed)
            episodes.append(
                sample_episode(
                    world, k, m, rng,
                    d_min=d_min, d_max=d_max, max_retries=max_retries,
                    agent_radius=agent_radius, seed=seed,
                )
            )
    config = {
        "m": m,
        "k": k,
        "per_world_count": per_world_count,
        "d_min": d_min,
        "d_max": d_max,
        "base_seed": base_seed,
        "agent_radius": agent_radius,
    }
    return EpisodeSet(split=split, episodes=episodes, config=config)


def episode_stats(eset: EpisodeSet, bin_width: float = 2.0):
    """Histogram of total geodesic distance; counts sum to the set size."""
    totals = [ep.total_distance for ep in eset.episodes]
    if not totals:
        return np.zeros(1, dtype=int), np.array([0.0, bin_width])
    nbins = max(1, int(np.ceil(max(totals) / bin_width + 1e-12)))
    edges = np.arange(nbins + 1) * bin_width
    counts, _ = np.histogram(totals, bins=edges)
    return counts, edges


# ---------------------------------------------------------------------------
# Persistence (JSONL, floats with 6 decimal places)
# ---------------------------------------------------------------------------


def _episode_line(ep: Episode) -> str:
    goals = ", ".join(
        '{"category": %d, "x": %.6f, "y": %.6f}' % (cat, pos[0], pos[1])
        for cat, pos in ep.goals
    )
    chain = ", ".join("%.6f" % d for d in ep.chain)
    return (
        '{"version": "%s", "world_id": %s, "seed": %d, '
        '"start": {"x": %.6f, "y": %.6f, "theta": %.6f}, '
        '"goals": [%s], "chain": [%s]}'
        % (
            EPISODE_FILE_VERSION,
            json.dumps(ep.world_id),
            ep.seed,
            ep.start[0],
            ep.start[1],
            ep.start[2],
            goals,
            chain,
        )
    )


def episodes_to_text(eset: EpisodeSet) -> str:
    header = json.dumps(
        {
            "version": EPISODE_FILE_VERSION,
            "type": "episode-set",
            "split": eset.split,
            "config": eset.config,
        },
        sort_keys=True,
    )
    return "\n".join([header] + [_episode_line(ep) for ep in eset.episodes]) + "\n"


def save_episodes(eset: EpisodeSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(episodes_to_text(eset))


def load_episodes(path) -> EpisodeSet:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return episodes_from_text(text)


def episodes_from_text(text: str) -> EpisodeSet:
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise SchemaError("empty episode file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SchemaError(f"bad header line: {e}") from e
    if not isinstance(header, dict) or header.get("type") != "episode-set":
        raise SchemaError("first line is not an episode-set header")
    version = header.get("version")
    if version != EPISODE_FILE_VERSION:
        raise SchemaError(f"unknown episode file version {version!r}")
    episodes = []
    for ln in lines[1:]:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise SchemaError(f"truncated or corrupt episode line: {e}") from e
        if rec.get("version") != EPISODE_FILE_VERSION:
            raise SchemaError(f"unknown episode version {rec.get('version')!r}")
        try:
            episodes.append(
                Episode(
                    world_id=rec["world_id"],
                    start=(rec["start"]["x"], rec["start"]["y"], rec["start"]["theta"]),
                    goals=[(g["category"], (g["x"], g["y"])) for g in rec["goals"]],
                    seed=rec["seed"],
                    chain=list(rec["chain"]),
                )
            )
        except (KeyError, TypeError) as e:
            raise SchemaError(f"episode line missing field: {e}") from e
    return EpisodeSet(split=header.get("split", ""), episodes=episodes, config=header.get("config", {}))
