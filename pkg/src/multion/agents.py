"""Baseline policies and a fixed map-consuming planner.

The planner reproduces the oracle / revealed / recognition map comparisons
with one deterministic controller: navigate to the believed goal cell when
the current category is present in the map memory, otherwise explore the
nearest frontier; emit FOUND on entering the believed cell. Failed FOUNDs
are inferred from an unchanged goal one-hot and the believed cell is then
discredited. Collisions mark the offending map cell in a blocked overlay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import NoFrontier, NoPath
from .mapmem import (
    NAVIGABLE,
    NON_NAVIGABLE,
    UNDISCOVERED,
    FeatureMap,
    GlobalMap,
    MapGeometry,
    build_oracle_map,
    classifier_emulator,
    objrecog_label,
    objrecog_update,
    project_features,
    register,
)
from .sim import FORWARD, FOUND, TURN_LEFT, TURN_RIGHT, SEEN_RANGE_M
from .world import visible_objects

SQRT2 = math.sqrt(2.0)
WAYPOINT_TOLERANCE_M = 0.3
PANORAMA_TURNS = 11  # 11 turns + walk-in heading = full 360 sweep

# Close-in pursuit for recognition-driven agents: once the goal is recognized
# with something in view inside the gate range, drive down the sensed ray and
# declare FOUND after closing within the found radius. The bound keeps a
# correct recognition geodesically inside the default vicinity threshold.
PURSUIT_GATE_RANGE_M = 2.0
PURSUIT_FOUND_RADIUS_M = 1.0
PURSUIT_MAX_STALE_STEPS = 25
FAILED_FOUND_SUPPRESS_M = 1.5

PLANNER_SOURCES = ("oracle", "oracle_ego", "objrecog", "projneural")

_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


def seen_tracker_update(flags, visible_categories, current_goal_index, goal_categories):
    """Mark strictly-future goals whose object is visible now.

    A goal only counts as seen while its predecessor is still unfound, so the
    current goal itself is never marked. Flags never reset.
    """
    for j in range(current_goal_index + 1, len(goal_categories)):
        if goal_categories[j] in visible_categories:
            flags[j] = True
    return flags


def rand_policy(rng) -> int:
    """Uniform draw over all four actions."""
    return int(rng.integers(0, 4))


def rand_oracle_found_policy(rng, within_vicinity: bool) -> int:
    """Uniform motion action; an oracle calls FOUND inside the vicinity."""
    if within_vicinity:
        return FOUND
    return int(rng.integers(0, 3))


class Policy:
    """Behavioral interface: stateless across episodes except via on_reset."""

    def on_reset(self, ctx) -> None:
        pass

    def act(self, obs, ego_view, task_info, rng) -> int:
        raise NotImplementedError


class RandPolicy(Policy):
    def act(self, obs, ego_view, task_info, rng) -> int:
        return rand_policy(rng)


class RandOracleFoundPolicy(Policy):
    def act(self, obs, ego_view, task_info, rng) -> int:
        return rand_oracle_found_policy(rng, task_info.within_vicinity)


# ---------------------------------------------------------------------------
# Grid planning over map memories
# ---------------------------------------------------------------------------


def _rule_mask(map_: GlobalMap, rule: str) -> np.ndarray:
    if rule == "oracle":
        return map_.occ == NAVIGABLE
    if rule == "optimistic":
        return map_.occ != NON_NAVIGABLE
    raise ValueError(f"unknown traversability rule {rule!r}")


def _cost_fields(trav: np.ndarray, from_cell, target=None):
    trav = trav.copy()
    if target is not None:
        trav[target[1], target[0]] = True
    stra, diag = _kernels.geodesic_steps(trav, from_cell[0], from_cell[1], False)
    return stra, diag, trav


def _descend(stra, diag, trav, from_cell, to_cell):
    """Walk the optimal-cost field from the target back to the source."""
    n = stra.shape[0]
    path = [to_cell]
    cur = to_cell
    while cur != from_cell:
        cx, cy = cur
        ck = stra[cy, cx] + diag[cy, cx] * SQRT2
        best = None
        for ox, oy in _NEIGHBORS:
            nx, ny = cx + ox, cy + oy
            if not (0 <= nx < n and 0 <= ny < n) or stra[ny, nx] < 0:
                continue
            if ox and oy and not (trav[cy, nx] and trav[ny, cx]):
                continue
            step = SQRT2 if ox and oy else 1.0
            nk = stra[ny, nx] + diag[ny, nx] * SQRT2
            if abs(nk + step - ck) < 1e-9 and (best is None or nk < best[0]):
                best = (nk, (nx, ny))
        if best is None:  # numerical dead end; cannot happen on exact fields
            raise NoPath(f"no descent step from {cur}")
        cur = best[1]
        path.append(cur)
    path.reverse()
    return path


def plan_path(map_: GlobalMap, from_cell, to_cell, rule: str = "oracle", blocked=frozenset()):
    """Shortest 8-connected path of map cells (no corner cutting).

    Rules: "oracle" walks navigable cells only; "optimistic" also walks
    undiscovered ones. The target cell is always admissible; raises NoPath.
    """
    trav = _rule_mask(map_, rule)
    if blocked:
        trav = trav.copy()
        for bx, by in blocked:
            trav[by, bx] = False
    stra, diag, trav = _cost_fields(trav, from_cell, target=to_cell)
    if stra[to_cell[1], to_cell[0]] < 0:
        raise NoPath(f"no {rule} path {from_cell} -> {to_cell}")
    return _descend(stra, diag, trav, from_cell, to_cell)


def path_cost_m(path, cell_size: float) -> float:
    """Metric length of a cell path."""
    total = 0.0
    for (ax, ay), (bx, by) in zip(path, path[1:]):
        total += cell_size * (SQRT2 if ax != bx and ay != by else 1.0)
    return total


def frontier_cells(map_: GlobalMap) -> np.ndarray:
    """Boolean grid of navigable cells 8-adjacent to undiscovered cells."""
    und = map_.occ == UNDISCOVERED
    near = np.zeros_like(und)
    near[:-1, :] |= und[1:, :]
    near[1:, :] |= und[:-1, :]
    near[:, :-1] |= und[:, 1:]
    near[:, 1:] |= und[:, :-1]
    near[:-1, :-1] |= und[1:, 1:]
    near[:-1, 1:] |= und[1:, :-1]
    near[1:, :-1] |= und[:-1, 1:]
    near[1:, 1:] |= und[:-1, :-1]
    return (map_.occ == NAVIGABLE) & near


def frontier_select(map_: GlobalMap, agent_cell, blocked=frozenset(), excluded=frozenset()):
    """Nearest frontier cell by optimistic path cost; raises NoFrontier."""
    frontier = frontier_cells(map_)
    for ex, ey in excluded:
        frontier[ey, ex] = False
    if not frontier.any():
        raise NoFrontier("no frontier cell remains")
    trav = _rule_mask(map_, "optimistic")
    if blocked:
        trav = trav.copy()
        for bx, by in blocked:
            trav[by, bx] = False
    stra, diag, _ = _cost_fields(trav, agent_cell)
    key = np.where(stra >= 0, stra + diag * SQRT2, np.inf)
    key[~frontier] = np.inf
    flat = int(np.argmin(key))
    if not np.isfinite(key.flat[flat]):
        raise NoFrontier("no reachable frontier cell")
    iy, ix = divmod(flat, key.shape[1])
    return (ix, iy)


# ---------------------------------------------------------------------------
# The planner policy
# ---------------------------------------------------------------------------


@dataclass
class PlannerState:
    source: str
    path: list = dc_field(default_factory=list)
    path_target: tuple | None = None
    frontier_target: tuple | None = None
    exhausted: set = dc_field(default_factory=set)
    blocked: set = dc_field(default_factory=set)
    discredited: dict = dc_field(default_factory=dict)  # category -> set of cells
    blocked_headings: set = dc_field(default_factory=set)  # (qx, qy, heading)
    pending_found: tuple | None = None  # (cell | None, goal_index)
    scan_remaining: int = 0
    scan_purpose: str = "frontier"  # "frontier" | "believe_check"
    scan_cell: tuple | None = None
    pursuit_point: tuple | None = None
    pursuit_stale: int = 0
    failed_founds: list = dc_field(default_factory=list)  # (goal_index, x, y)
    best_waypoint_dist: float = math.inf
    no_progress_steps: int = 0
    last_pose: tuple | None = None
    last_action: int | None = None


class PlannerPolicy(Policy):
    """Waypoint-following controller over one of the map representations."""

    def __init__(
        self,
        source: str,
        cell_size: float = 0.4,
        classifier_miss: float = 0.0,
        classifier_confusion: float = 0.0,
        geometry: MapGeometry | None = None,
    ):
        if source not in PLANNER_SOURCES:
            raise ValueError(f"unknown planner source {source!r}")
        self.source = source
        self.cell_size = cell_size
        self.classifier_miss = classifier_miss
        self.classifier_confusion = classifier_confusion
        self._fixed_geometry = geometry

    # -- lifecycle ---------------------------------------------------------

    def on_reset(self, ctx) -> None:
        self.ctx = ctx
        self.geometry = self._fixed_geometry or MapGeometry.for_world(ctx.world, self.cell_size)
        self.rule = "oracle" if self.source == "oracle" else "optimistic"
        self.ps = PlannerState(self.source)
        if self.source == "oracle":
            self.map = build_oracle_map(ctx.world, ctx.objects, self.geometry)
            self.oracle = None
        else:
            self.map = GlobalMap.empty(self.geometry)
            if self.source == "oracle_ego":
                self.oracle = build_oracle_map(ctx.world, ctx.objects, self.geometry)
            else:
                self.oracle = build_oracle_map(ctx.world, [], self.geometry, channels="occ")
        if self.source == "projneural":
            self.features = FeatureMap.empty(
                self.geometry, self.ctx.config.num_categories + 2
            )

    # -- per-step update of the agent's own map memory ----------------------

    def _update_memory(self, obs, task, rng) -> None:
        if self.source == "oracle":
            return
        vis = task.visible_map_mask(self.geometry, SEEN_RANGE_M)
        self.map.occ[vis] = self.oracle.occ[vis]
        if self.source == "oracle_ego":
            self.map.obj[vis] = self.oracle.obj[vis]
        # Perfect localization: the agent always knows the cell it stands in.
        ax, ay = self.geometry.cell_of(task.pose[0], task.pose[1])
        if self.geometry.contains_cell(ax, ay):
            self.map.occ[ay, ax] = NAVIGABLE
        if self.source == "objrecog":
            label = objrecog_label(self.ctx.world, self.ctx.objects, task.pose, self.ctx.config.fov)
            pred = classifier_emulator(
                label, rng, self.classifier_miss, self.classifier_confusion,
                self.ctx.config.num_categories,
            )
            self._last_pred = pred
            objrecog_update(self.map, task.pose, pred)
        elif self.source == "projneural":
            view = project_features(
                obs,
                cell_size=self.geometry.cell_size,
                fov_deg=self.ctx.config.fov,
                num_categories=self.ctx.config.num_categories,
            )
            register(view, self.features, task.pose)

    # -- belief over the current goal ---------------------------------------

    def _believed_cells(self, category: int):
        if self.source == "projneural":
            hits = np.argwhere(self.features.feat[:, :, category] >= 0.5)
        else:
            hits = np.argwhere(self.map.obj == category)
        bad = self.ps.discredited.get(category, set())
        return [(int(x), int(y)) for y, x in hits if (int(x), int(y)) not in bad]

    # -- main control --------------------------------------------------------

    def act(self, obs, ego_view, task, rng) -> int:
        ps = self.ps
        # Collision inference: an unmoved FORWARD blocks that heading here and
        # marks the cell ahead (never the agent's own cell) in the overlay.
        if ps.last_action == FORWARD and ps.last_pose is not None:
            lx, ly, lth = ps.last_pose
            if abs(task.pose[0] - lx) < 1e-12 and abs(task.pose[1] - ly) < 1e-12:
                ps.blocked_headings.add((round(lx, 4), round(ly, 4), lth))
                th = math.radians(lth)
                cell = self.geometry.cell_of(lx + 0.25 * math.cos(th), ly + 0.25 * math.sin(th))
                own = self.geometry.cell_of(lx, ly)
                if cell != own and self.geometry.contains_cell(*cell):
                    ps.blocked.add(cell)
                ps.path = []

        self._last_semantic = obs.semantic_scan
        self._update_memory(obs, task, rng)

        # A FOUND that did not advance the goal index discredits its source:
        # either the believed cell or the pursuit neighborhood.
        if ps.pending_found is not None:
            cell, goal_index = ps.pending_found
            ps.pending_found = None
            if task.current_goal_index == goal_index:
                cat = self.ctx.episode.goals[goal_index][0]
                bad = ps.discredited.setdefault(cat, set())
                if cell is not None:
                    bad.add(cell)
                else:
                    px, py = task.pose[0], task.pose[1]
                    ps.failed_founds.append((goal_index, px, py))
                    for c in self._believed_cells(cat):
                        if math.dist(self._center(c), (px, py)) <= PURSUIT_FOUND_RADIUS_M:
                            bad.add(c)
                ps.path = []

        action = self._decide(task, rng)
        ps.last_pose = task.pose
        ps.last_action = action
        return action

    def _decide(self, task, rng) -> int:
        ps = self.ps
        agent_cell = self.geometry.cell_of(task.pose[0], task.pose[1])
        category = self.ctx.episode.goals[task.current_goal_index][0]
        if self.source in ("objrecog", "projneural"):
            action = self._pursue(task, category)
            if action is not None:
                return action
        while True:
            believed = self._believed_cells(category)
            if not believed:
                break
            ps.frontier_target = None
            target = min(
                believed,
                key=lambda c: (abs(c[0] - agent_cell[0]) + abs(c[1] - agent_cell[1]), c),
            )
            if agent_cell != target:
                if ps.scan_purpose == "believe_check":
                    ps.scan_remaining = 0
                    ps.scan_cell = None
                return self._navigate(task, agent_cell, target)
            if self.source in ("oracle", "oracle_ego"):
                ps.pending_found = (target, task.current_goal_index)
                ps.path = []
                return FOUND
            # Recognition memory says "the goal was within sight of this
            # cell": sweep for it; an empty sweep discredits the memory.
            if ps.scan_cell != target:
                ps.scan_cell = target
                ps.scan_purpose = "believe_check"
                ps.scan_remaining = PANORAMA_TURNS
                return TURN_LEFT
            if ps.scan_remaining > 0:
                ps.scan_remaining -= 1
                return TURN_LEFT
            ps.discredited.setdefault(category, set()).add(target)
            ps.scan_cell = None
        # No belief: frontier exploration with a panoramic sweep on arrival.
        if ps.scan_purpose == "frontier" and ps.scan_remaining > 0:
            ps.scan_remaining -= 1
            return TURN_LEFT
        if ps.frontier_target is not None and agent_cell == ps.frontier_target:
            ps.exhausted.add(ps.frontier_target)
            ps.frontier_target = None
            ps.path = []
            ps.scan_purpose = "frontier"
            ps.scan_remaining = PANORAMA_TURNS
            return TURN_LEFT
        if ps.frontier_target is None or not self._still_frontier(ps.frontier_target):
            ps.path = []
            try:
                ps.frontier_target = frontier_select(
                    self.map, agent_cell, blocked=ps.blocked, excluded=ps.exhausted
                )
            except NoFrontier:
                ps.frontier_target = None
                return FOUND if task.within_vicinity else TURN_LEFT
        return self._navigate(task, agent_cell, ps.frontier_target)

    # -- recognition-driven close-in ------------------------------------------

    def _pursue(self, task, category: int):
        """Latch onto a live recognition and close in along the sensed ray;
        returns the next action, or None when no pursuit is active."""
        ps = self.ps
        x, y = task.pose[0], task.pose[1]
        if self.source == "objrecog":
            recognized = self._last_pred == category
        else:
            recognized = bool((self._last_semantic == category).any())
        suppressed = any(
            g == task.current_goal_index and math.dist((x, y), (fx, fy)) < FAILED_FOUND_SUPPRESS_M
            for g, fx, fy in ps.failed_founds
        )
        if recognized and not suppressed:
            vis = visible_objects(
                self.ctx.world, self.ctx.objects, task.pose,
                self.ctx.config.fov, PURSUIT_GATE_RANGE_M,
            )
            if vis:
                ray = self._ray_toward_category(task, vis[0][1].category)
                if ray is not None:
                    th = math.radians(ray)
                    ps.pursuit_point = (
                        x + PURSUIT_GATE_RANGE_M * math.cos(th),
                        y + PURSUIT_GATE_RANGE_M * math.sin(th),
                    )
                    ps.pursuit_stale = 0
        if ps.pursuit_point is None:
            return None
        ps.pursuit_stale += 1
        if ps.pursuit_stale > PURSUIT_MAX_STALE_STEPS:
            ps.pursuit_point = None
            return None
        qx, qy = ps.pursuit_point
        if math.dist((x, y), (qx, qy)) <= PURSUIT_FOUND_RADIUS_M:
            ps.pursuit_point = None
            ps.pending_found = (None, task.current_goal_index)
            ps.path = []
            return FOUND
        bearing = math.degrees(math.atan2(qy - y, qx - x))
        desired = self._steer_heading(task, bearing)
        err = _wrap(desired - task.pose[2])
        if abs(err) > 1e-9:
            return TURN_RIGHT if err > 0 else TURN_LEFT
        return FORWARD

    def _ray_toward_category(self, task, category: int):
        """Absolute heading of the middle scan ray showing ``category``."""
        sem = self._last_semantic
        idx = np.flatnonzero(sem == category)
        if len(idx) == 0:
            return None
        cfg = self.ctx.config
        angles = np.linspace(-cfg.fov / 2.0, cfg.fov / 2.0, len(sem))
        return task.pose[2] + float(angles[idx[len(idx) // 2]])

    def _still_frontier(self, cell) -> bool:
        if cell in self.ps.exhausted:
            return False
        occ = self.map.occ
        cx, cy = cell
        if occ[cy, cx] != NAVIGABLE:
            return False
        n = occ.shape[0]
        for ox, oy in _NEIGHBORS:
            nx, ny = cx + ox, cy + oy
            if 0 <= nx < n and 0 <= ny < n and occ[ny, nx] == UNDISCOVERED:
                return True
        return False

    # -- waypoint following ---------------------------------------------------

    def _navigate(self, task, agent_cell, target) -> int:
        ps = self.ps
        if ps.path_target != target or not self._path_still_valid():
            try:
                ps.path = plan_path(self.map, agent_cell, target, self.rule, ps.blocked)
            except NoPath:
                if ps.blocked:
                    ps.blocked = set()  # collision overlay may be stale; retry once
                    try:
                        ps.path = plan_path(self.map, agent_cell, target, self.rule, ps.blocked)
                    except NoPath:
                        return self._stuck(task)
                else:
                    return self._stuck(task)
            ps.path = self._string_pull(ps.path)
            ps.path_target = target
            ps.best_waypoint_dist = math.inf
            ps.no_progress_steps = 0
        x, y = task.pose[0], task.pose[1]
        # The final waypoint is never popped by tolerance: the agent must
        # actually enter the target cell (arrival is checked per act).
        popped = False
        while len(ps.path) > 1 and math.dist((x, y), self._center(ps.path[0])) < WAYPOINT_TOLERANCE_M:
            ps.path.pop(0)
            popped = True
        if not ps.path:
            ps.path_target = None
            return self._turn_toward(task, self._center(target))
        # Watchdog: drifting off the corridor without closing on the waypoint
        # forces a replan from the current position.
        wp_dist = math.dist((x, y), self._center(ps.path[0]))
        if popped or wp_dist < ps.best_waypoint_dist - 1e-9:
            ps.best_waypoint_dist = wp_dist
            ps.no_progress_steps = 0
        else:
            ps.no_progress_steps += 1
            if ps.no_progress_steps > 14:
                ps.path = []
                ps.path_target = None
                ps.best_waypoint_dist = math.inf
                ps.no_progress_steps = 0
                return self._turn_toward(task, self._center(target))
        wx, wy = self._center(ps.path[0])
        bearing = math.degrees(math.atan2(wy - y, wx - x))
        desired = self._steer_heading(task, bearing)
        err = _wrap(desired - task.pose[2])
        if abs(err) > 1e-9:
            return TURN_RIGHT if err > 0 else TURN_LEFT
        return FORWARD

    def _steer_heading(self, task, bearing: float) -> float:
        """Quantized heading nearest the bearing whose forward endpoint lands
        in an allowed cell, skipping headings that collided at this position;
        sidesteps around corner pinches."""
        x, y = task.pose[0], task.pose[1]
        qx, qy = round(x, 4), round(y, 4)
        own = self.geometry.cell_of(x, y)
        base = math.floor(bearing / 30.0 + 0.5) * 30.0
        fallback = None
        for k in (0, 30, -30, 60, -60, 90, -90, 120, -120, 150, -150, 180):
            h = (base + k) % 360.0
            if (qx, qy, h) in self.ps.blocked_headings:
                continue
            th = math.radians(h)
            cell = self.geometry.cell_of(x + 0.25 * math.cos(th), y + 0.25 * math.sin(th))
            if self._cell_allowed(cell, own):
                return h
            if fallback is None:
                fallback = h
        return base % 360.0 if fallback is None else fallback

    def _cell_allowed(self, cell, own_cell) -> bool:
        ps = self.ps
        if cell == own_cell or cell == ps.path_target or (ps.path and cell == ps.path[0]):
            return True
        if not self.geometry.contains_cell(*cell):
            return False
        if cell in ps.blocked:
            return False
        occ = self.map.occ[cell[1], cell[0]]
        return occ == NAVIGABLE if self.rule == "oracle" else occ != NON_NAVIGABLE

    def _stuck(self, task) -> int:
        return FOUND if task.within_vicinity else TURN_LEFT

    def _turn_toward(self, task, point) -> int:
        bearing = math.degrees(math.atan2(point[1] - task.pose[1], point[0] - task.pose[0]))
        err = _wrap(bearing - task.pose[2])
        return TURN_RIGHT if err > 0 else TURN_LEFT

    def _center(self, cell) -> tuple[float, float]:
        return self.geometry.cell_center(cell[0], cell[1])

    def _path_still_valid(self) -> bool:
        ps = self.ps
        if not ps.path:
            return False
        occ = self.map.occ
        for i, (cx, cy) in enumerate(ps.path):
            if (cx, cy) in ps.blocked and (cx, cy) != ps.path_target:
                return False
            bad = occ[cy, cx] != NAVIGABLE if self.rule == "oracle" else occ[cy, cx] == NON_NAVIGABLE
            if bad and (cx, cy) != ps.path_target:
                return False
        return True

    def _string_pull(self, path, window: int = 6):
        """Greedy line-of-sight simplification of a cell path.

        Shortcuts look at most ``window`` cells ahead so the follower stays
        near the planned corridor.
        """
        if len(path) <= 2:
            return path[1:]
        blocked_grid = ~_rule_mask(self.map, self.rule)
        for bx, by in self.ps.blocked:
            blocked_grid[by, bx] = True
        out = []
        i = 0
        ox, oy = self.geometry.origin
        while i < len(path) - 1:
            px, py = self._center(path[i])
            hi = min(len(path) - 1, i + window)
            nxt = i + 1
            txs = np.array([self._center(path[j])[0] - ox for j in range(hi, i, -1)])
            tys = np.array([self._center(path[j])[1] - oy for j in range(hi, i, -1)])
            clear = _kernels.segments_clear(
                blocked_grid, self.geometry.cell_size, px - ox, py - oy, txs, tys
            )
            for k, ok in enumerate(clear):
                if ok:
                    nxt = hi - k
                    break
            out.append(path[nxt])
            i = nxt
        return out


def _wrap(deg: float) -> float:
    return -((180.0 - deg) % 360.0) + 180.0


# ---------------------------------------------------------------------------
# Agent registry
# ---------------------------------------------------------------------------


def make_policy(spec: str, **kwargs) -> Policy:
    """Build a policy from its harness spec string, e.g. "rand" or
    "planner:objrecog"."""
    if spec == "rand":
        return RandPolicy()
    if spec == "rand_oracle_found":
        return RandOracleFoundPolicy()
    if spec.startswith("planner:"):
        return PlannerPolicy(spec.split(":", 1)[1], **kwargs)
    raise ValueError(f"unknown agent spec {spec!r}")
