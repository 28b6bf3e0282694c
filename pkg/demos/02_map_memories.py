"""Map memories: oracle maps, progressive reveal, recognition writes,
feature projection, egocentric crops.

Run from the repository root:  python demos/02_map_memories.py
"""

import numpy as np

from multion import mapmem as M
from multion import world as W

OCC_CHARS = {M.UNDISCOVERED: "?", M.NAVIGABLE: ".", M.NON_NAVIGABLE: "#"}


def show(gmap, agent_cell=None):
    n = gmap.geometry.size_cells
    rows = []
    for iy in range(n):
        row = []
        for ix in range(n):
            ch = OCC_CHARS[int(gmap.occ[iy, ix])]
            if gmap.obj[iy, ix]:
                ch = str(int(gmap.obj[iy, ix]))
            if agent_cell == (ix, iy):
                ch = "@"
            row.append(ch)
        rows.append("".join(row))
    print("\n".join(rows))


world = W.generate_world(seed=11, size_m=10.0, room_count=3)
geometry = M.MapGeometry.for_world(world, cell_size=0.4)
nav = world.navigable_mask(0.1)
ys, xs = np.where(nav)
objects = [
    W.ObjectInstance(2, world.cell_center(int(xs[len(xs) // 3]), int(ys[len(ys) // 3]))),
    W.ObjectInstance(5, world.cell_center(int(xs[-9]), int(ys[-9]))),
]

# -- the full ground-truth map ------------------------------------------------
oracle = M.build_oracle_map(world, objects, geometry)
print("oracle map (occupancy labels + object categories):")
show(oracle)

# -- progressive reveal through visibility -------------------------------------
revealed = M.GlobalMap.empty(geometry)
mid = len(xs) // 2
pose = (*world.cell_center(int(xs[mid]), int(ys[mid])), 0.0)
for theta in range(0, 360, 30):
    vis = W.visible_cells(world, (pose[0], pose[1], float(theta)), fov_deg=79.0,
                          range_m=5.0, geometry=geometry)
    M.reveal(revealed, oracle, vis)
print("\nrevealed map after one full panorama from '@' (never un-reveals):")
show(revealed, agent_cell=geometry.cell_of(pose[0], pose[1]))

# -- recognition writes at the agent's cell ------------------------------------
rng = np.random.default_rng(0)
recog = M.GlobalMap.empty(geometry)
near = (objects[0].position[0] - 1.0, objects[0].position[1], 0.0)  # facing the object
label = M.objrecog_label(world, objects, near)
pred = M.classifier_emulator(label, rng, miss_rate=0.2, confusion_rate=0.05)
M.objrecog_update(recog, near, pred)
print(f"\nrecognition near object 2: true label {label}, noisy prediction {pred}; "
      f"written at the agent's own cell {geometry.cell_of(near[0], near[1])}")

# -- feature projection and registration ---------------------------------------
from multion.sim import Observation

scan = Observation(
    depth_scan=np.array([2.0, 1.2, 3.0]),
    semantic_scan=np.array([0, 2, 0]),
    goal_onehot=np.zeros(8, dtype=int),
    prev_action=None,
)
view = M.project_features(scan, cell_size=geometry.cell_size, ego_rows=7, ego_cols=13)
fmap = M.FeatureMap.empty(geometry, view.feat.shape[2])
M.register(view, fmap, near)
written = np.argwhere(fmap.feat.any(axis=2))
print(f"projected 3 rays into the agent frame and registered them into "
      f"{len(written)} global cells: {[tuple(int(v) for v in c[::-1]) for c in written]}")

# -- egocentric crop ------------------------------------------------------------
crop = M.ego_crop(oracle, near, view_cells=7)
print("\n7x7 egocentric crop of the oracle map at the recognition pose:")
print("\n".join("".join(OCC_CHARS[int(c)] for c in row) for row in crop.occ))

# -- dynamic filtering -----------------------------------------------------------
only5 = M.dynamic_filter(oracle, current_goal_category=5)
print(f"\ndynamic view keeps only the current goal: categories left = "
      f"{sorted(set(only5.obj[only5.obj != 0].tolist()))}")
