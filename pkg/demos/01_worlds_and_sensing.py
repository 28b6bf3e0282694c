"""Worlds and sensing: generate an occupancy world, cast rays, query geodesics.

Run from the repository root:  python demos/01_worlds_and_sensing.py
"""

import numpy as np

from multion import world as W

# -- procedural world --------------------------------------------------------
# Rooms chained by corridors; deterministic for a fixed seed.
world = W.generate_world(seed=7, size_m=12.0, room_count=4, corridor_width_m=1.5)
print(f"world {world.name}: {world.width_cells}x{world.height_cells} cells "
      f"at {world.resolution} m, {int((~world.occupancy).sum())} free cells")

# Text-art preview, downsampled 4x for the terminal.
ds = world.occupancy[::4, ::4]
print("\n".join("".join("#" if c else "." for c in row) for row in ds))

# -- navigability ------------------------------------------------------------
nav = world.navigable_mask(agent_radius=0.1)
print(f"\ncells a 0.1 m-radius body can stand on: {int(nav.sum())}")

ys, xs = np.where(nav)
start = world.cell_center(int(xs[0]), int(ys[0]))
goal = world.cell_center(int(xs[-1]), int(ys[-1]))

# -- geodesic distances ------------------------------------------------------
d = W.geodesic_distance(world, start, goal, agent_radius=0.1)
print(f"geodesic {start} -> {goal}: {d:.2f} m "
      f"(straight-line {np.hypot(goal[0]-start[0], goal[1]-start[1]):.2f} m)")

field = W.geodesic_field(world, goal, agent_radius=0.1)
finite = field[np.isfinite(field)]
print(f"distance field from the goal: {finite.size} reachable cells, "
      f"max {finite.max():.2f} m")

# -- raycasting --------------------------------------------------------------
# A fan of rays from the start, plus one goal object dropped in front.
obj = W.ObjectInstance(category=3, position=goal)
print("\nray fan from the start pose (angle: distance, what was hit):")
for ang in range(0, 360, 45):
    hit = W.raycast(world, [obj], start, ang, max_range=10.0)
    label = f"object {hit.category}" if hit.kind == "object" else hit.kind
    print(f"  {ang:3d} deg: {hit.distance:5.2f} m  {label}")
