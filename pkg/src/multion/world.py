"""Occupancy-grid worlds: parsing, generation, geodesics, raycasting, visibility.

Conventions used throughout the package:

- World coordinates are meters, x to the right, y increasing with row index.
- Cell (ix, iy) covers [ix*res, (ix+1)*res) x [iy*res, (iy+1)*res); the grid
  array is indexed ``occupancy[iy, ix]``.
- Headings are degrees; theta = 0 points +x and the heading vector is
  (cos(theta), sin(theta)).
- Geodesic distances live on the 8-connected graph of cells: a straight step
  costs ``resolution`` and a diagonal step ``resolution * sqrt(2)``. Graph
  membership erodes the agent radius by half a cell diagonal so that every
  navigable continuous pose sits in a graph cell.
"""

from __future__ import annotations

import math
import re
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import GenerationError, InvalidPoint, ParseError, Unreachable

SQRT2 = math.sqrt(2.0)
DEFAULT_AGENT_RADIUS = 0.1
WORLD_FILE_HEADER = "multion-world v1"

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class ObjectInstance:
    """A goal object: a small disc with a category label."""

    category: int
    position: tuple[float, float]
    radius: float = 0.05

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("object radius must be positive")
        if self.category < 1:
            raise ValueError("object category must be >= 1")


@dataclass
class RayHit:
    distance: float
    kind: str  # "wall" | "object" | "max-range"
    category: int = 0  # set when kind == "object"


class GridWorld:
    """Immutable occupancy grid with metric resolution.

    Derived structures (navigability masks, geodesic fields) are cached on
    the instance; the occupancy array itself is frozen after construction.
    """

    def __init__(self, occupancy: np.ndarray, resolution: float, name: str = "world"):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        occ = np.asarray(occupancy, dtype=bool).copy()
        if occ.ndim != 2 or occ.size == 0:
            raise ValueError("occupancy must be a non-empty 2-D grid")
        # Worlds are closed: the border ring is always occupied.
        occ[0, :] = True
        occ[-1, :] = True
        occ[:, 0] = True
        occ[:, -1] = True
        occ.setflags(write=False)
        self.occupancy = occ
        self.resolution = float(resolution)
        self.name = name
        self._mask_cache: dict[float, np.ndarray] = {}
        self._field_cache: OrderedDict = OrderedDict()

    @property
    def height_cells(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width_cells(self) -> int:
        return self.occupancy.shape[1]

    @property
    def width_m(self) -> float:
        return self.width_cells * self.resolution

    @property
    def height_m(self) -> float:
        return self.height_cells * self.resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(x // self.resolution), int(y // self.resolution)

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width_m and 0.0 <= y < self.height_m

    def navigable_mask(self, agent_radius: float = DEFAULT_AGENT_RADIUS) -> np.ndarray:
        """Boolean grid: True where a disc of the given radius fits at the cell center."""
        key = round(float(agent_radius), 9)
        mask = self._mask_cache.get(key)
        if mask is None:
            if agent_radius <= 0:
                mask = ~self.occupancy
            else:
                blocked = ndimage.binary_dilation(
                    self.occupancy, structure=_disc_cell_footprint(agent_radius, self.resolution)
                )
                mask = ~blocked
            mask.setflags(write=False)
            self._mask_cache[key] = mask
        return mask

    def traversable_mask(self, agent_radius: float = DEFAULT_AGENT_RADIUS) -> np.ndarray:
        """Cells forming the geodesic graph for the given agent radius.

        The radius is eroded by half a cell diagonal so any cell containing a
        navigable continuous pose is a graph node.
        """
        shrunk = max(0.0, agent_radius - self.resolution * SQRT2 / 2.0)
        return self.navigable_mask(shrunk)

    def geodesic_step_field(self, cell: tuple[int, int], agent_radius: float = DEFAULT_AGENT_RADIUS):
        """(straight, diagonal) step-count grids of shortest paths from ``cell``."""
        key = (round(float(agent_radius), 9), cell)
        hit = self._field_cache.get(key)
        if hit is not None:
            self._field_cache.move_to_end(key)
            return hit
        trav = self.traversable_mask(agent_radius)
        stra, diag = _kernels.geodesic_steps(trav, cell[0], cell[1])
        stra.setflags(write=False)
        diag.setflags(write=False)
        self._field_cache[key] = (stra, diag)
        if len(self._field_cache) > 64:
            self._field_cache.popitem(last=False)
        return stra, diag


def _disc_cell_footprint(radius: float, res: float) -> np.ndarray:
    """Relative cell offsets whose rectangle a center-placed disc overlaps."""
    k = int(math.ceil(radius / res)) + 1
    size = 2 * k + 1
    fp = np.zeros((size, size), dtype=bool)
    cx = 0.5 * res
    for oy in range(-k, k + 1):
        for ox in range(-k, k + 1):
            px = min(max(cx, ox * res), (ox + 1) * res)
            py = min(max(cx, oy * res), (oy + 1) * res)
            if math.hypot(px - cx, py - cx) < radius:
                fp[oy + k, ox + k] = True
    return fp


def steps_to_meters(straight, diagonal, resolution: float):
    """Canonical metric value of an integer step pair (shared with test oracles)."""
    return straight * resolution + diagonal * (resolution * SQRT2)


# ---------------------------------------------------------------------------
# World file format
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^multion-world v1 resolution=([0-9eE+\-.]+)$")


def load_world(text: str, name: str = "world") -> GridWorld:
    """Parse the ASCII world format ('#' occupied, '.' free, one-line header)."""
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty world file")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise ParseError(f"bad header line: {lines[0]!r}")
    try:
        resolution = float(m.group(1))
    except ValueError as e:
        raise ParseError(f"bad resolution in header: {m.group(1)!r}") from e
    if resolution <= 0:
        raise ParseError("resolution must be positive")
    rows = lines[1:]
    if not rows:
        raise ParseError("world file has no grid rows")
    width = len(rows[0])
    occ = np.zeros((len(rows), width), dtype=bool)
    for iy, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"ragged row {iy}: length {len(row)} != {width}")
        for ix, ch in enumerate(row):
            if ch == "#":
                occ[iy, ix] = True
            elif ch == ".":
                occ[iy, ix] = False
            else:
                raise ParseError(f"unknown character {ch!r} at row {iy}, col {ix}")
    world = GridWorld(occ, resolution, name=name)
    if not (~world.occupancy).any():
        raise ParseError("world has zero free cells")
    return world


def world_to_text(world: GridWorld) -> str:
    """Inverse of load_world (UTF-8 text, LF line endings)."""
    rows = ["".join("#" if c else "." for c in row) for row in world.occupancy]
    return f"{WORLD_FILE_HEADER} resolution={world.resolution!r}\n" + "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Procedural generation
# ---------------------------------------------------------------------------


def generate_world(
    seed: int,
    size_m: float = 20.0,
    corridor_width_m: float = 1.5,
    room_count: int = 6,
    resolution: float = 0.1,
    border_m: float = 0.4,
    min_wall_m: float = 0.5,
    name: str | None = None,
) -> GridWorld:
    """Deterministic rooms-and-corridors world.

    All free cells form one 8-connected component (rooms are chained by
    corridors). Interior walls thinner than ``min_wall_m`` are opened up so
    coarse map memories can always represent the remaining walls; free
    slivers narrower than the agent body are filled in.
    Raises GenerationError if constraints cannot be met.
    """
    if size_m < 5:
        raise ValueError("size_m must be at least 5")
    if corridor_width_m < 3 * resolution:
        raise ValueError("corridor_width_m must be at least 3 * resolution")
    if room_count < 1:
        raise ValueError("room_count must be positive")

    n = int(round(size_m / resolution))
    bc = max(1, int(round(border_m / resolution)))
    cw = max(3, int(round(corridor_width_m / resolution)))
    hw = cw // 2
    room_min = max(cw + 2, int(round(2.5 / resolution)))
    room_max = max(room_min + 1, n // 3)
    if 2 * bc + room_min >= n:
        raise GenerationError("world too small for the requested border and rooms")

    for attempt in range(25):
        rng = np.random.default_rng([seed, attempt])
        occ = np.ones((n, n), dtype=bool)
        centers = []
        for _ in range(room_count):
            rw = int(rng.integers(room_min, min(room_max, n - 2 * bc) + 1))
            rh = int(rng.integers(room_min, min(room_max, n - 2 * bc) + 1))
            x0 = int(rng.integers(bc, n - bc - rw + 1))
            y0 = int(rng.integers(bc, n - bc - rh + 1))
            occ[y0 : y0 + rh, x0 : x0 + rw] = False
            centers.append((x0 + rw // 2, y0 + rh // 2))
        for (ax, ay), (bx, by) in zip(centers, centers[1:]):
            if rng.integers(0, 2) == 0:
                _carve_h(occ, ay, ax, bx, hw, bc)
                _carve_v(occ, bx, ay, by, hw, bc)
            else:
                _carve_v(occ, ax, ay, by, hw, bc)
                _carve_h(occ, by, ax, bx, hw, bc)
        # Open up interior walls thinner than min_wall_m (coarse maps could
        # not represent them), then restore the border ring.
        wall_cells = max(3, int(round(min_wall_m / resolution)))
        if wall_cells % 2 == 0:
            wall_cells += 1
        occ = ndimage.binary_opening(occ, structure=np.ones((wall_cells, wall_cells), dtype=bool))
        occ[:bc, :] = occ[-bc:, :] = occ[:, :bc] = occ[:, -bc:] = True
        free = ~occ
        # Drop free slivers narrower than the default agent body; the rooms
        # and corridors themselves are wide enough to survive the opening.
        free = ndimage.binary_opening(free, structure=_EIGHT_CONNECTED)
        free[0, :] = free[-1, :] = free[:, 0] = free[:, -1] = False
        if not free.any():
            continue
        _, ncomp = ndimage.label(free, structure=_EIGHT_CONNECTED)
        if ncomp == 1:
            return GridWorld(~free, resolution, name=name or f"gen-{seed}")
    raise GenerationError(f"could not generate a connected world for seed {seed}")


def _carve_h(occ, y, xa, xb, hw, bc):
    n = occ.shape[0]
    x0, x1 = sorted((xa, xb))
    lo = max(bc, y - hw)
    hi = min(n - bc, y + hw + 1)
    occ[lo:hi, max(bc, x0 - hw) : min(n - bc, x1 + hw + 1)] = False


def _carve_v(occ, x, ya, yb, hw, bc):
    n = occ.shape[0]
    y0, y1 = sorted((ya, yb))
    lo = max(bc, x - hw)
    hi = min(n - bc, x + hw + 1)
    occ[max(bc, y0 - hw) : min(n - bc, y1 + hw + 1), lo:hi] = False


# ---------------------------------------------------------------------------
# Navigability and geodesics
# ---------------------------------------------------------------------------


def is_navigable(world: GridWorld, x: float, y: float, agent_radius: float = DEFAULT_AGENT_RADIUS) -> bool:
    """True iff a disc of the given radius at (x, y) fits in free space in bounds."""
    if not world.in_bounds(x, y):
        return False
    r = agent_radius
    if x - r < 0 or y - r < 0 or x + r > world.width_m or y + r > world.height_m:
        return False
    res = world.resolution
    if r <= 0:
        ix, iy = world.cell_of(x, y)
        return not world.occupancy[iy, ix]
    ix0 = max(0, int((x - r) // res))
    ix1 = min(world.width_cells - 1, int((x + r) // res))
    iy0 = max(0, int((y - r) // res))
    iy1 = min(world.height_cells - 1, int((y + r) // res))
    for iy in range(iy0, iy1 + 1):
        for ix in range(ix0, ix1 + 1):
            if not world.occupancy[iy, ix]:
                continue
            px = min(max(x, ix * res), (ix + 1) * res)
            py = min(max(y, iy * res), (iy + 1) * res)
            if math.hypot(px - x, py - y) < r:
                return False
    return True


def geodesic_field(world: GridWorld, b: tuple[float, float], agent_radius: float = DEFAULT_AGENT_RADIUS) -> np.ndarray:
    """Grid of geodesic distances (meters) from every cell center to ``b``.

    Occupied or unreachable cells hold +inf. Raises InvalidPoint when ``b``
    is not navigable.
    """
    if not is_navigable(world, b[0], b[1], agent_radius):
        raise InvalidPoint(f"point {b} is not navigable at radius {agent_radius}")
    stra, diag = world.geodesic_step_field(world.cell_of(b[0], b[1]), agent_radius)
    field = steps_to_meters(stra.astype(np.float64), diag.astype(np.float64), world.resolution)
    field[stra < 0] = np.inf
    field.setflags(write=False)
    return field


def geodesic_distance(
    world: GridWorld,
    a: tuple[float, float],
    b: tuple[float, float],
    agent_radius: float = DEFAULT_AGENT_RADIUS,
) -> float:
    """Shortest 8-connected cell-path length in meters between a and b.

    Raises InvalidPoint if either endpoint is not navigable, Unreachable if
    they lie in different components.
    """
    for p in (a, b):
        if not is_navigable(world, p[0], p[1], agent_radius):
            raise InvalidPoint(f"point {p} is not navigable at radius {agent_radius}")
    stra, diag = world.geodesic_step_field(world.cell_of(b[0], b[1]), agent_radius)
    ix, iy = world.cell_of(a[0], a[1])
    sa = int(stra[iy, ix])
    if sa < 0:
        raise Unreachable(f"{a} and {b} are in different components")
    return steps_to_meters(sa, int(diag[iy, ix]), world.resolution)


# ---------------------------------------------------------------------------
# Raycasting and visibility
# ---------------------------------------------------------------------------


def _ray_object_hit(objects, origin, cos_a, sin_a):
    """Nearest (t, category) object-disc intersection along one ray, or None."""
    best = None
    ox, oy = origin
    for obj in objects:
        rx = obj.position[0] - ox
        ry = obj.position[1] - oy
        b = rx * cos_a + ry * sin_a
        c2 = rx * rx + ry * ry
        if c2 < obj.radius * obj.radius:
            t = 0.0
        else:
            if b <= 0:
                continue
            h2 = c2 - b * b
            d2 = obj.radius * obj.radius - h2
            if d2 <= 0:
                continue
            t = b - math.sqrt(d2)
            if t < 0:
                continue
        if best is None or t < best[0]:
            best = (t, obj.category)
    return best


def raycast(
    world: GridWorld,
    objects: list[ObjectInstance],
    origin: tuple[float, float],
    angle_deg: float,
    max_range: float,
) -> RayHit:
    """First intersection along the ray: wall boundary or object disc, nearer wins."""
    a = math.radians(angle_deg)
    cos_a = np.array([math.cos(a)])
    sin_a = np.array([math.sin(a)])
    wall_t = float(
        _kernels.ray_wall_distances(
            world.occupancy, world.resolution, origin[0], origin[1], cos_a, sin_a, max_range
        )[0]
    )
    obj_hit = _ray_object_hit(objects, origin, cos_a[0], sin_a[0])
    if obj_hit is not None and obj_hit[0] <= max_range and obj_hit[0] < wall_t:
        return RayHit(obj_hit[0], "object", obj_hit[1])
    if wall_t < max_range:
        return RayHit(wall_t, "wall")
    return RayHit(max_range, "max-range")


def wall_scan(world: GridWorld, pose, angles_deg: np.ndarray, max_range: float) -> np.ndarray:
    """Wall distances for a fan of rays (absolute angles, degrees)."""
    rad = np.radians(angles_deg)
    return _kernels.ray_wall_distances(
        world.occupancy, world.resolution, pose[0], pose[1], np.cos(rad), np.sin(rad), max_range
    )


def _wrap_angle(deg):
    """Wrap to (-180, 180]."""
    return -((180.0 - deg) % 360.0) + 180.0


def visible_objects(
    world: GridWorld,
    objects: list[ObjectInstance],
    pose,
    fov_deg: float,
    range_m: float,
) -> list[tuple[float, ObjectInstance]]:
    """Objects satisfying the visibility conditions, as (distance, object) pairs.

    Conditions: within fov/2 of the heading, within range, unobstructed
    straight line from the agent to the object position.
    """
    x, y, theta = pose[0], pose[1], pose[2]
    out = []
    cand = []
    for obj in objects:
        dx = obj.position[0] - x
        dy = obj.position[1] - y
        d = math.hypot(dx, dy)
        if d > range_m:
            continue
        if d > 0 and abs(_wrap_angle(math.degrees(math.atan2(dy, dx)) - theta)) > fov_deg / 2.0:
            continue
        cand.append((d, obj))
    if not cand:
        return out
    txs = np.array([c[1].position[0] for c in cand])
    tys = np.array([c[1].position[1] for c in cand])
    clear = _kernels.segments_clear(world.occupancy, world.resolution, x, y, txs, tys)
    for ok, pair in zip(clear, cand):
        if ok:
            out.append(pair)
    out.sort(key=lambda p: p[0])
    return out


def visible_cells_mask(world: GridWorld, pose, fov_deg: float, range_m: float, geometry) -> np.ndarray:
    """Visibility as a boolean grid over the map geometry (fast path)."""
    return _kernels.visible_cells_mask(
        world.occupancy,
        world.resolution,
        pose[0],
        pose[1],
        pose[2],
        fov_deg,
        range_m,
        geometry.origin[0],
        geometry.origin[1],
        geometry.cell_size,
        geometry.size_cells,
    )


def visible_cells(world: GridWorld, pose, fov_deg: float, range_m: float, geometry) -> set[tuple[int, int]]:
    """Map cells visible from ``pose``: center in the FOV wedge, within range,
    and with no occupied world cell strictly between agent and center."""
    mask = visible_cells_mask(world, pose, fov_deg, range_m, geometry)
    ys, xs = np.nonzero(mask)
    return {(int(ix), int(iy)) for ix, iy in zip(xs, ys)}
