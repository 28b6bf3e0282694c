"""Allocentric map memories and egocentric views.

Four representations share the same grid geometry:

- oracle map: full ground-truth occupancy labels + goal categories,
- revealed map: oracle values copied in progressively through visibility,
- object-recognition map: categories written at the agent's own cell from a
  (possibly noisy) classifier,
- feature map: per-cell feature vectors integrated by element-wise max.

Occupancy labels: 0 = undiscovered/outside, 1 = navigable, 2 = non-navigable.
Object channel: 0 = no goal, 1..k = goal category.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GeometryMismatch
from .world import GridWorld, ObjectInstance, visible_objects

UNDISCOVERED = 0
NAVIGABLE = 1
NON_NAVIGABLE = 2

DEFAULT_FOV_DEG = 79.0
VISIBILITY_RANGE_M = 5.0  # reveal / "object seen" range
OBJRECOG_RANGE_M = 2.5  # recognition-label range
PROJECTION_CUTOFF_M = 5.6  # depth cutoff for feature projection
DEFAULT_NUM_CATEGORIES = 8


@dataclass(frozen=True)
class MapGeometry:
    """Square allocentric grid; cell (0, 0) has its corner at ``origin``."""

    size_cells: int = 300
    cell_size: float = 0.8
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.cell_size <= 0 or self.size_cells <= 0:
            raise ValueError("geometry must have positive size")

    @classmethod
    def for_world(cls, world: GridWorld, cell_size: float = 0.4) -> "MapGeometry":
        """Smallest geometry covering the world's bounding box."""
        extent = max(world.width_m, world.height_m)
        return cls(int(math.ceil(extent / cell_size)), cell_size, (0.0, 0.0))

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int((x - self.origin[0]) // self.cell_size),
            int((y - self.origin[1]) // self.cell_size),
        )

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin[0] + (ix + 0.5) * self.cell_size,
            self.origin[1] + (iy + 0.5) * self.cell_size,
        )

    def contains_cell(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.size_cells and 0 <= iy < self.size_cells

    def covers_world(self, world: GridWorld) -> bool:
        span = self.size_cells * self.cell_size
        return (
            self.origin[0] <= 0
            and self.origin[1] <= 0
            and self.origin[0] + span >= world.width_m
            and self.origin[1] + span >= world.height_m
        )


@dataclass
class GlobalMap:
    """Tri-state occupancy plus categorical object channel on one geometry."""

    geometry: MapGeometry
    occ: np.ndarray
    obj: np.ndarray

    @classmethod
    def empty(cls, geometry: MapGeometry) -> "GlobalMap":
        n = geometry.size_cells
        return cls(geometry, np.zeros((n, n), dtype=np.uint8), np.zeros((n, n), dtype=np.int16))

    def copy(self) -> "GlobalMap":
        return GlobalMap(self.geometry, self.occ.copy(), self.obj.copy())

    def to_snapshot(self) -> dict:
        return {
            "version": "v1",
            "geometry": {
                "size_cells": self.geometry.size_cells,
                "cell_size": self.geometry.cell_size,
                "origin": list(self.geometry.origin),
            },
            "occ": self.occ.tolist(),
            "obj": self.obj.tolist(),
        }


def snapshot_to_map(snap: dict) -> GlobalMap:
    geom = MapGeometry(
        snap["geometry"]["size_cells"],
        snap["geometry"]["cell_size"],
        tuple(snap["geometry"]["origin"]),
    )
    return GlobalMap(
        geom,
        np.asarray(snap["occ"], dtype=np.uint8),
        np.asarray(snap["obj"], dtype=np.int16),
    )


@dataclass
class FeatureMap:
    """Per-cell feature vectors, all-zero until written."""

    geometry: MapGeometry
    feat: np.ndarray  # (size, size, F) float32

    @classmethod
    def empty(cls, geometry: MapGeometry, num_features: int) -> "FeatureMap":
        n = geometry.size_cells
        return cls(geometry, np.zeros((n, n, num_features), dtype=np.float32))


@dataclass
class EgoView:
    """Agent-frame view: either the projection frame (agent at mid-bottom of a
    rows x cols grid) or the rotated policy crop (agent at the center)."""

    frame: str  # "projection" | "policy"
    cell_size: float
    feat: np.ndarray | None = None  # (rows, cols, F)
    occ: np.ndarray | None = None  # (V, V) for GlobalMap policy crops
    obj: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Oracle map construction and progressive reveal
# ---------------------------------------------------------------------------


def build_oracle_map(
    world: GridWorld,
    objects: list[ObjectInstance],
    geometry: MapGeometry,
    channels: str = "occ+obj",
) -> GlobalMap:
    """Ground-truth map: majority-vote occupancy labels plus object cells.

    ``channels`` selects the ablation: "occ+obj", "occ" (objects omitted) or
    "obj" (occupancy left undiscovered).
    """
    if channels not in ("occ+obj", "occ", "obj"):
        raise ValueError(f"unknown channels spec {channels!r}")
    if not geometry.covers_world(world):
        raise GeometryMismatch("map geometry does not cover the world bounding box")
    out = GlobalMap.empty(geometry)
    if channels in ("occ+obj", "occ"):
        out.occ = _occ_labels(world, geometry).copy()
    if channels in ("occ+obj", "obj"):
        for o in objects:
            ix, iy = geometry.cell_of(*o.position)
            if not geometry.contains_cell(ix, iy):
                continue
            prev = out.obj[iy, ix]
            if prev != 0 and prev != o.category:
                warnings.warn(
                    f"two objects share map cell ({ix}, {iy}); "
                    f"category {o.category} overwrites {prev}",
                    stacklevel=2,
                )
            out.obj[iy, ix] = o.category
    return out


def _occ_labels(world: GridWorld, geometry: MapGeometry) -> np.ndarray:
    """Per-map-cell majority label; cached on the world per geometry."""
    key = ("occ_labels", geometry.size_cells, geometry.cell_size, geometry.origin)
    cached = world._mask_cache.get(key)
    if cached is not None:
        return cached
    n = geometry.size_cells
    res = world.resolution
    cs = geometry.cell_size
    wy, wx = np.mgrid[0 : world.height_cells, 0 : world.width_cells]
    cxs = (wx + 0.5) * res - geometry.origin[0]
    cys = (wy + 0.5) * res - geometry.origin[1]
    mix = np.floor(cxs / cs).astype(np.int64)
    miy = np.floor(cys / cs).astype(np.int64)
    ok = (mix >= 0) & (mix < n) & (miy >= 0) & (miy < n)
    flat = miy[ok] * n + mix[ok]
    occupied = world.occupancy[ok]
    total = np.bincount(flat, minlength=n * n).reshape(n, n)
    walls = np.bincount(flat, weights=occupied.astype(np.float64), minlength=n * n).reshape(n, n)
    labels = np.zeros((n, n), dtype=np.uint8)
    cells_per_map_cell = (cs / res) ** 2
    inside = total >= 0.5 * cells_per_map_cell
    labels[inside & (walls * 2 >= total)] = NON_NAVIGABLE
    labels[inside & (walls * 2 < total)] = NAVIGABLE
    labels.setflags(write=False)
    world._mask_cache[key] = labels
    return labels


def reveal(revealed: GlobalMap, oracle: GlobalMap, visible) -> GlobalMap:
    """Copy oracle occ/obj into ``revealed`` at the visible cells (in place).

    ``visible`` is a set of (ix, iy) cells or a boolean mask over the grid.
    Already-revealed cells are rewritten with identical oracle values, so the
    map never un-reveals.
    """
    if revealed.geometry != oracle.geometry:
        raise GeometryMismatch("revealed and oracle maps must share geometry")
    if isinstance(visible, np.ndarray):
        revealed.occ[visible] = oracle.occ[visible]
        revealed.obj[visible] = oracle.obj[visible]
        return revealed
    if not visible:
        return revealed
    cells = np.asarray(list(visible), dtype=np.int64)
    ixs, iys = cells[:, 0], cells[:, 1]
    revealed.occ[iys, ixs] = oracle.occ[iys, ixs]
    revealed.obj[iys, ixs] = oracle.obj[iys, ixs]
    return revealed


# ---------------------------------------------------------------------------
# Object-recognition map
# ---------------------------------------------------------------------------


def objrecog_label(
    world: GridWorld,
    objects: list[ObjectInstance],
    pose,
    fov_deg: float = DEFAULT_FOV_DEG,
    range_m: float = OBJRECOG_RANGE_M,
) -> int:
    """Ground-truth recognition target: nearest visible object's category, 0 if none."""
    vis = visible_objects(world, objects, pose, fov_deg, range_m)
    return vis[0][1].category if vis else 0


def classifier_emulator(
    true_label: int,
    rng: np.random.Generator,
    miss_rate: float,
    confusion_rate: float,
    num_categories: int = DEFAULT_NUM_CATEGORIES,
) -> int:
    """Noisy stand-in for a trained recognizer.

    With probability miss_rate the label is dropped to 0; with probability
    confusion_rate a uniformly random wrong nonzero category is returned.
    A true label of 0 always maps to 0.
    """
    if not (0 <= miss_rate <= 1 and 0 <= confusion_rate <= 1):
        raise ValueError("rates must lie in [0, 1]")
    if miss_rate + confusion_rate > 1:
        raise ValueError("miss_rate + confusion_rate must not exceed 1")
    if true_label == 0:
        return 0
    u = rng.random()
    if u < miss_rate:
        return 0
    if u < miss_rate + confusion_rate:
        wrong = int(rng.integers(1, num_categories))
        return wrong if wrong < true_label else wrong + 1
    return true_label


def objrecog_update(map_: GlobalMap, pose, predicted: int) -> GlobalMap:
    """Write the predicted category at the cell containing the agent (in place);
    a 'no object' prediction (0) leaves the map unchanged."""
    if predicted == 0:
        return map_
    ix, iy = map_.geometry.cell_of(pose[0], pose[1])
    if not map_.geometry.contains_cell(ix, iy):
        raise GeometryMismatch(f"pose {pose[:2]} outside map geometry")
    map_.obj[iy, ix] = predicted
    return map_


# ---------------------------------------------------------------------------
# Feature projection and registration
# ---------------------------------------------------------------------------


def default_ray_features(obs, num_categories: int = DEFAULT_NUM_CATEGORIES) -> np.ndarray:
    """Per-ray feature vectors: one-hot of the semantic category (k+1 slots,
    slot 0 = none) plus a trailing wall-hit flag. Shape (n_rays, k+2)."""
    n = len(obs.depth_scan)
    feats = np.zeros((n, num_categories + 2), dtype=np.float32)
    feats[np.arange(n), np.asarray(obs.semantic_scan, dtype=np.int64)] = 1.0
    feats[:, -1] = 1.0
    return feats


def project_features(
    obs,
    feature_fn=None,
    ego_rows: int = 7,
    ego_cols: int = 13,
    cutoff: float = PROJECTION_CUTOFF_M,
    cell_size: float = 0.8,
    fov_deg: float = DEFAULT_FOV_DEG,
    num_categories: int = DEFAULT_NUM_CATEGORIES,
) -> EgoView:
    """Depth-conditioned projection of per-ray features into the agent frame.

    The agent sits at the middle of the bottom edge; rays deeper than
    ``cutoff`` are not projected; collisions in a cell merge by element-wise
    max. ``feature_fn(obs) -> (n_rays, F)`` defaults to semantic one-hots.
    """
    depth = np.asarray(obs.depth_scan, dtype=np.float64)
    n = depth.shape[0]
    feats = feature_fn(obs) if feature_fn is not None else default_ray_features(obs, num_categories)
    angles = np.radians(np.linspace(-fov_deg / 2.0, fov_deg / 2.0, n))
    fwd = depth * np.cos(angles)
    lat = depth * np.sin(angles)
    rows = ego_rows - 1 - np.floor(fwd / cell_size).astype(np.int64)
    cols = np.floor(lat / cell_size + ego_cols / 2.0).astype(np.int64)
    keep = (
        (depth <= cutoff)
        & (rows >= 0)
        & (rows < ego_rows)
        & (cols >= 0)
        & (cols < ego_cols)
    )
    grid = np.zeros((ego_rows, ego_cols, feats.shape[1]), dtype=np.float32)
    for r, c, f in zip(rows[keep], cols[keep], feats[keep]):
        np.maximum(grid[r, c], f, out=grid[r, c])
    return EgoView(frame="projection", cell_size=cell_size, feat=grid)


def register(ego: EgoView, global_map: FeatureMap, pose) -> FeatureMap:
    """Rigidly place a projection-frame view into the global feature map.

    Each nonzero ego cell center is rotated by the heading, translated by the
    position, then merged into its global cell by element-wise max (in place).
    """
    if ego.frame != "projection" or ego.feat is None:
        raise ValueError("register expects a projection-frame EgoView")
    if abs(ego.cell_size - global_map.geometry.cell_size) > 1e-12:
        raise GeometryMismatch("ego and global cell sizes differ")
    rows, cols, nf = ego.feat.shape
    if nf != global_map.feat.shape[2]:
        raise GeometryMismatch("feature dimensions differ")
    nz = np.argwhere(ego.feat.any(axis=2))
    if nz.size == 0:
        return global_map
    cs = ego.cell_size
    x, y, theta = pose[0], pose[1], pose[2]
    th = math.radians(theta)
    ux, uy = math.cos(th), math.sin(th)  # forward
    vx, vy = -math.sin(th), math.cos(th)  # lateral (+ toward +ray-angle side)
    geom = global_map.geometry
    for r, c in nz:
        f_c = (rows - 1 - r + 0.5) * cs
        l_c = (c - cols / 2.0 + 0.5) * cs
        px = x + f_c * ux + l_c * vx
        py = y + f_c * uy + l_c * vy
        ix, iy = geom.cell_of(px, py)
        if geom.contains_cell(ix, iy):
            np.maximum(global_map.feat[iy, ix], ego.feat[r, c], out=global_map.feat[iy, ix])
    return global_map


# ---------------------------------------------------------------------------
# Egocentric crop and dynamic filtering
# ---------------------------------------------------------------------------


def ego_crop(map_: GlobalMap | FeatureMap, pose, view_cells: int) -> EgoView:
    """V x V crop centered on the agent's cell, rotated so the crop's axes
    follow the heading; nearest-neighbor sampling, out-of-map reads are
    undiscovered/zero. At theta = 0 the crop equals the axis-aligned window.
    """
    if view_cells % 2 != 1:
        raise ValueError("view size V must be odd")
    geom = map_.geometry
    cs = geom.cell_size
    v2 = view_cells // 2
    acx, acy = geom.cell_of(pose[0], pose[1])
    cx, cy = geom.cell_center(acx, acy)
    th = math.radians(pose[2])
    cos_t, sin_t = math.cos(th), math.sin(th)
    jj, ii = np.meshgrid(np.arange(view_cells), np.arange(view_cells))
    off_x = (jj - v2) * cs
    off_y = (ii - v2) * cs
    sx = cx + off_x * cos_t - off_y * sin_t
    sy = cy + off_x * sin_t + off_y * cos_t
    ixs = np.floor((sx - geom.origin[0]) / cs).astype(np.int64)
    iys = np.floor((sy - geom.origin[1]) / cs).astype(np.int64)
    inside = (ixs >= 0) & (ixs < geom.size_cells) & (iys >= 0) & (iys < geom.size_cells)
    ixs_c = np.clip(ixs, 0, geom.size_cells - 1)
    iys_c = np.clip(iys, 0, geom.size_cells - 1)
    if isinstance(map_, FeatureMap):
        out = map_.feat[iys_c, ixs_c].copy()
        out[~inside] = 0.0
        return EgoView(frame="policy", cell_size=cs, feat=out)
    occ = map_.occ[iys_c, ixs_c].copy()
    obj = map_.obj[iys_c, ixs_c].copy()
    occ[~inside] = UNDISCOVERED
    obj[~inside] = 0
    return EgoView(frame="policy", cell_size=cs, occ=occ, obj=obj)


def dynamic_filter(map_: GlobalMap, current_goal_category: int) -> GlobalMap:
    """Copy with every object entry other than the current goal category zeroed."""
    out = map_.copy()
    out.obj[out.obj != current_goal_category] = 0
    return out
