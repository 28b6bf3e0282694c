"""The embodied task state machine: actions, observations, FOUND, reward.

Actions: FORWARD moves 0.25 m along the heading (blocked moves stay put, no
sliding), turns are 30 degrees, FOUND declares the current goal. A FOUND
call within the vicinity threshold (geodesic) advances the goal; beyond the
wrong-FOUND budget it terminates the episode.

Reward per step: r = 3.0 * [goal reached] + (d_before - d_after) - 0.01,
with d the geodesic distance to the goal that was current at step start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .episodes import Episode
from .errors import InconsistentEpisode, PolicyError, SteppedTerminated
from .metrics import EpisodeRecord
from .world import (
    DEFAULT_AGENT_RADIUS,
    GridWorld,
    ObjectInstance,
    geodesic_field,
    is_navigable,
    visible_cells,
    visible_cells_mask,
    visible_objects,
    wall_scan,
)

FORWARD = 0
TURN_LEFT = 1
TURN_RIGHT = 2
FOUND = 3
ACTIONS = (FORWARD, TURN_LEFT, TURN_RIGHT, FOUND)
ACTION_NAMES = ("forward", "turn-left", "turn-right", "found")

FORWARD_STEP_M = 0.25
TURN_DEG = 30.0
AGENT_RADIUS_M = DEFAULT_AGENT_RADIUS
REWARD_GOAL = 3.0
REWARD_SLACK = -0.01
SEEN_RANGE_M = 5.0  # "object seen" visibility range

RUNNING = "running"
SUCCESS = "success"
FAILED_WRONG_FOUND = "failed_wrong_found"
FAILED_TIMEOUT = "failed_timeout"


@dataclass
class Pose:
    x: float
    y: float
    theta: float  # degrees in [0, 360), multiple of 30

    def __post_init__(self):
        self.theta = self.theta % 360.0

    def heading(self) -> tuple[float, float]:
        th = math.radians(self.theta)
        return math.cos(th), math.sin(th)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass
class Observation:
    depth_scan: np.ndarray
    semantic_scan: np.ndarray  # 0 = none, 1..k = category
    goal_onehot: np.ndarray
    prev_action: int | None


@dataclass
class SimConfig:
    max_steps: int = 2500
    vicinity_threshold: float = 1.5
    found_budget: int = 0
    n_rays: int = 64
    fov: float = 79.0
    max_depth: float = 10.0
    hidden_objects: bool = False
    proportional_time_limit: bool = False
    num_categories: int = 8

    def __post_init__(self):
        if min(self.max_steps, self.n_rays) < 1 or min(self.vicinity_threshold, self.fov, self.max_depth) <= 0:
            raise ValueError("sim config values must be positive")
        if self.found_budget < 0:
            raise ValueError("found_budget must be >= 0")

    def step_limit(self, m: int) -> int:
        if self.proportional_time_limit:
            return (self.max_steps * m) // 3
        return self.max_steps


@dataclass
class SimState:
    episode: Episode
    world: GridWorld
    config: SimConfig
    objects: list[ObjectInstance]
    pose: Pose
    current_goal_index: int = 0
    steps_taken: int = 0
    wrong_found_count: int = 0
    status: str = RUNNING
    cumulative_path_length: float = 0.0
    goal_fields: list[np.ndarray] = field(default_factory=list)
    seen: list[bool] = field(default_factory=list)
    found_steps: list[int] = field(default_factory=list)
    wrong_found_before: list[int] = field(default_factory=list)

    @property
    def num_goals(self) -> int:
        return self.episode.num_goals

    def current_goal_category(self) -> int:
        if self.current_goal_index >= self.num_goals:
            return 0
        return self.episode.goals[self.current_goal_index][0]

    def distance_to_goal(self, goal_index: int | None = None) -> float:
        idx = self.current_goal_index if goal_index is None else goal_index
        ix, iy = self.world.cell_of(self.pose.x, self.pose.y)
        return float(self.goal_fields[idx][iy, ix])

    def within_vicinity(self) -> bool:
        if self.current_goal_index >= self.num_goals:
            return False
        return self.distance_to_goal() <= self.config.vicinity_threshold


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    events: list


_RAY_OFFSETS: dict = {}


def _ray_offsets(n_rays: int, fov: float) -> np.ndarray:
    key = (n_rays, fov)
    out = _RAY_OFFSETS.get(key)
    if out is None:
        out = np.linspace(-fov / 2.0, fov / 2.0, n_rays)
        out.setflags(write=False)
        _RAY_OFFSETS[key] = out
    return out


def reset(episode: Episode, world: GridWorld, config: SimConfig) -> tuple[SimState, Observation]:
    """Start an episode: agent at the start pose, first goal active, geodesic
    fields for every goal precomputed."""
    sx, sy, stheta = episode.start
    if not is_navigable(world, sx, sy, AGENT_RADIUS_M):
        raise InconsistentEpisode(f"start {episode.start[:2]} not navigable in {world.name!r}")
    for cat, pos in episode.goals:
        if not is_navigable(world, pos[0], pos[1], AGENT_RADIUS_M):
            raise InconsistentEpisode(f"goal {pos} not navigable in {world.name!r}")
    fields = [geodesic_field(world, pos, AGENT_RADIUS_M) for _, pos in episode.goals]
    state = SimState(
        episode=episode,
        world=world,
        config=config,
        objects=episode.objects(),
        pose=Pose(sx, sy, stheta),
        goal_fields=fields,
        seen=[False] * episode.num_goals,
    )
    _update_seen(state)
    return state, render_observation(state, prev_action=None)


def render_observation(state: SimState, prev_action: int | None = None) -> Observation:
    """Depth/semantic ray scans plus the current goal one-hot.

    Walls set the depth (objects never occlude geometry); the semantic scan
    holds the nearest object category per ray within max_depth, all zero when
    objects are hidden.
    """
    cfg = state.config
    pose = state.pose
    angles = pose.theta + _ray_offsets(cfg.n_rays, cfg.fov)
    depth = wall_scan(state.world, (pose.x, pose.y), angles, cfg.max_depth)
    semantic = np.zeros(cfg.n_rays, dtype=np.int64)
    if not cfg.hidden_objects and state.objects:
        rad = np.radians(angles)
        cos_a, sin_a = np.cos(rad), np.sin(rad)
        best_t = np.full(cfg.n_rays, np.inf)
        for obj in state.objects:
            rx = obj.position[0] - pose.x
            ry = obj.position[1] - pose.y
            b = rx * cos_a + ry * sin_a
            c2 = rx * rx + ry * ry
            h2 = c2 - b * b
            d2 = obj.radius * obj.radius - h2
            hit = (b > 0) & (d2 > 0)
            t = b - np.sqrt(np.where(hit, d2, 0.0))
            if c2 < obj.radius * obj.radius:
                t = np.zeros_like(t)
                hit = np.ones_like(hit)
            ok = hit & (t >= 0) & (t <= cfg.max_depth) & (t <= depth) & (t < best_t)
            semantic[ok] = obj.category
            best_t[ok] = t[ok]
    onehot = np.zeros(cfg.num_categories, dtype=np.int64)
    cat = state.current_goal_category()
    if cat:
        onehot[cat - 1] = 1
    return Observation(depth, semantic, onehot, prev_action)


def _update_seen(state: SimState) -> None:
    """Mark strictly-future goals whose object is visible right now; a goal
    only counts as seen before its predecessor was found."""
    vis = visible_objects(
        state.world, state.objects, state.pose.as_tuple(), state.config.fov, SEEN_RANGE_M
    )
    if not vis:
        return
    visible_cats = {obj.category for _, obj in vis}
    from .agents import seen_tracker_update

    seen_tracker_update(
        state.seen,
        visible_cats,
        state.current_goal_index,
        [cat for cat, _ in state.episode.goals],
    )


def step(state: SimState, action: int) -> StepResult:
    """Advance the simulation one action; see the module docstring for the
    motion, FOUND, reward, and timeout rules."""
    if state.status != RUNNING:
        raise SteppedTerminated(f"episode already ended with status {state.status!r}")
    if action not in ACTIONS:
        raise PolicyError(f"invalid action id {action!r}")
    state.steps_taken += 1
    events = []
    goal_at_start = state.current_goal_index
    d_before = state.distance_to_goal(goal_at_start)
    reached_goal = False

    if action == FORWARD:
        hx, hy = state.pose.heading()
        nx = state.pose.x + FORWARD_STEP_M * hx
        ny = state.pose.y + FORWARD_STEP_M * hy
        if is_navigable(state.world, nx, ny, AGENT_RADIUS_M):
            state.pose.x = nx
            state.pose.y = ny
            state.cumulative_path_length += FORWARD_STEP_M
        else:
            events.append(("collision",))
    elif action == TURN_LEFT:
        state.pose.theta = (state.pose.theta - TURN_DEG) % 360.0
    elif action == TURN_RIGHT:
        state.pose.theta = (state.pose.theta + TURN_DEG) % 360.0
    else:  # FOUND
        if state.within_vicinity():
            events.append(("goal_found", state.current_goal_index))
            state.found_steps.append(state.steps_taken)
            state.wrong_found_before.append(state.wrong_found_count)
            state.current_goal_index += 1
            reached_goal = True
            if state.current_goal_index == state.num_goals:
                state.status = SUCCESS
        else:
            state.wrong_found_count += 1
            events.append(("wrong_found",))
            if state.wrong_found_count > state.config.found_budget:
                state.status = FAILED_WRONG_FOUND

    d_after = state.distance_to_goal(goal_at_start)
    reward = (REWARD_GOAL if reached_goal else 0.0) + (d_before - d_after) + REWARD_SLACK

    if state.status == RUNNING and state.steps_taken >= state.config.step_limit(state.num_goals):
        state.status = FAILED_TIMEOUT
        events.append(("timeout",))

    if state.status == RUNNING or state.status == SUCCESS:
        _update_seen(state)
    obs = render_observation(state, prev_action=action)
    return StepResult(obs, reward, state.status != RUNNING, events)


# ---------------------------------------------------------------------------
# Rollout driver
# ---------------------------------------------------------------------------


@dataclass
class EpisodeContext:
    """Everything a policy may use at reset time."""

    world: GridWorld
    episode: Episode
    objects: list[ObjectInstance]
    config: SimConfig


class TaskInfo:
    """Per-step facts handed to policies; visibility is computed lazily and
    memoized for the step."""

    def __init__(self, state: SimState):
        self._state = state
        self.pose = state.pose.as_tuple()
        self.step = state.steps_taken
        self.current_goal_index = state.current_goal_index
        self.within_vicinity = state.within_vicinity()
        self._vis_cache: dict = {}

    def visible_map_cells(self, geometry, range_m: float = SEEN_RANGE_M) -> set:
        key = (id(geometry), range_m)
        if key not in self._vis_cache:
            self._vis_cache[key] = visible_cells(
                self._state.world, self.pose, self._state.config.fov, range_m, geometry
            )
        return self._vis_cache[key]

    def visible_map_mask(self, geometry, range_m: float = SEEN_RANGE_M) -> np.ndarray:
        key = ("mask", id(geometry), range_m)
        if key not in self._vis_cache:
            self._vis_cache[key] = visible_cells_mask(
                self._state.world, self.pose, self._state.config.fov, range_m, geometry
            )
        return self._vis_cache[key]

    def visible_object_categories(self, range_m: float) -> list[tuple[float, int]]:
        vis = visible_objects(
            self._state.world, self._state.objects, self.pose, self._state.config.fov, range_m
        )
        return [(d, obj.category) for d, obj in vis]


def run_episode(
    policy,
    episode: Episode,
    world: GridWorld,
    config: SimConfig,
    trace_sink=None,
    rng: np.random.Generator | None = None,
    episode_index: int = -1,
) -> EpisodeRecord:
    """Roll one episode to termination and assemble its EpisodeRecord.

    ``trace_sink``, when given, receives one dict per step. The policy rng
    derives from the episode seed so reruns are bit-identical.
    """
    if rng is None:
        rng = np.random.default_rng([episode.seed, 1])
    state, obs = reset(episode, world, config)
    policy.on_reset(EpisodeContext(world, episode, state.objects, config))
    while state.status == RUNNING:
        action = policy.act(obs, None, TaskInfo(state), rng)
        if not isinstance(action, (int, np.integer)) or action not in ACTIONS:
            raise PolicyError(f"policy returned invalid action {action!r}")
        result = step(state, int(action))
        if trace_sink is not None:
            trace_sink(
                {
                    "t": state.steps_taken,
                    "action": ACTION_NAMES[int(action)],
                    "x": round(state.pose.x, 6),
                    "y": round(state.pose.y, 6),
                    "theta": state.pose.theta,
                    "reward": round(result.reward, 9),
                    "goal_index": state.current_goal_index,
                    "event": _event_tag(result.events),
                }
            )
        obs = result.observation
    termination = {
        SUCCESS: "success",
        FAILED_WRONG_FOUND: "wrong_found",
        FAILED_TIMEOUT: "timeout",
    }[state.status]
    return EpisodeRecord(
        m=state.num_goals,
        goals_found=state.current_goal_index,
        path_length=state.cumulative_path_length,
        chain=list(episode.chain),
        termination=termination,
        seen=list(state.seen),
        found_steps=list(state.found_steps),
        wrong_found_before=list(state.wrong_found_before),
        steps=state.steps_taken,
        world_id=episode.world_id,
        episode_index=episode_index,
    )


def _event_tag(events: list) -> str | None:
    if not events:
        return None
    parts = []
    for ev in events:
        if ev[0] == "goal_found":
            parts.append(f"goal_found:{ev[1]}")
        else:
            parts.append(ev[0])
    return ",".join(parts)
