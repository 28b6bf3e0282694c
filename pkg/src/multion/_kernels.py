"""Grid-geometry kernels (numba-compiled).

All kernels treat the occupancy grid as ``occ[iy, ix]`` with cell (ix, iy)
covering the square [ix*res, (ix+1)*res) x [iy*res, (iy+1)*res).

Geodesic distances are tracked as integer (straight, diagonal) step counts so
that the final metric value ``a*res + b*(res*sqrt(2))`` is bit-identical no
matter which code path computed it.
"""

import numpy as np
from numba import njit

_BIG = 1e18


@njit(cache=True)
def ray_wall_distances(occ, res, x0, y0, cos_a, sin_a, max_range):
    """Exact DDA march of one ray per (cos_a, sin_a) entry.

    Returns the distance to the first occupied-cell boundary crossed, or
    max_range when nothing is hit within range.
    """
    n = cos_a.shape[0]
    out = np.empty(n, dtype=np.float64)
    h, w = occ.shape
    for i in range(n):
        dx = cos_a[i]
        dy = sin_a[i]
        cx = int(x0 // res)
        cy = int(y0 // res)
        if cx < 0 or cx >= w or cy < 0 or cy >= h or occ[cy, cx]:
            out[i] = 0.0
            continue
        step_x = 1 if dx > 0.0 else -1
        step_y = 1 if dy > 0.0 else -1
        t_dx = abs(res / dx) if dx != 0.0 else _BIG
        t_dy = abs(res / dy) if dy != 0.0 else _BIG
        if dx > 0.0:
            t_mx = ((cx + 1) * res - x0) / dx
        elif dx < 0.0:
            t_mx = (cx * res - x0) / dx
        else:
            t_mx = _BIG
        if dy > 0.0:
            t_my = ((cy + 1) * res - y0) / dy
        elif dy < 0.0:
            t_my = (cy * res - y0) / dy
        else:
            t_my = _BIG
        hit = max_range
        while True:
            if t_mx < t_my:
                t = t_mx
                t_mx += t_dx
                cx += step_x
            else:
                t = t_my
                t_my += t_dy
                cy += step_y
            if t > max_range:
                break
            if cx < 0 or cx >= w or cy < 0 or cy >= h:
                break
            if occ[cy, cx]:
                hit = t
                break
        out[i] = hit
    return out


@njit(cache=True, inline="always")
def _segment_clear_one(occ, res, x0, y0, sx, sy, tx, ty):
    """Line of sight from (x0, y0) in cell (sx, sy) to the point (tx, ty).

    Clear when no occupied cell is entered strictly before the cell holding
    the target; neither endpoint cell blocks. Cells entered within the last
    1e-9 of the segment do not block either: the target point regularly sits
    exactly on a grid line and the final crossing must not leak into a
    neighboring cell.
    """
    h, w = occ.shape
    tcx = int(tx // res)
    tcy = int(ty // res)
    if sx == tcx and sy == tcy:
        return True
    dx = tx - x0
    dy = ty - y0
    cx = sx
    cy = sy
    step_x = 1 if dx > 0.0 else -1
    step_y = 1 if dy > 0.0 else -1
    t_dx = abs(res / dx) if dx != 0.0 else _BIG
    t_dy = abs(res / dy) if dy != 0.0 else _BIG
    if dx > 0.0:
        t_mx = ((cx + 1) * res - x0) / dx
    elif dx < 0.0:
        t_mx = (cx * res - x0) / dx
    else:
        t_mx = _BIG
    if dy > 0.0:
        t_my = ((cy + 1) * res - y0) / dy
    elif dy < 0.0:
        t_my = (cy * res - y0) / dy
    else:
        t_my = _BIG
    t_end = 1.0 - 1e-9
    max_iter = abs(tcx - sx) + abs(tcy - sy) + 2
    for _ in range(max_iter):
        if t_mx < t_my:
            t = t_mx
            t_mx += t_dx
            cx += step_x
        else:
            t = t_my
            t_my += t_dy
            cy += step_y
        if t >= t_end:
            break
        if cx == tcx and cy == tcy:
            break
        if cx < 0 or cx >= w or cy < 0 or cy >= h:
            return False
        if occ[cy, cx]:
            return False
    return True


@njit(cache=True)
def segments_clear(occ, res, x0, y0, txs, tys):
    """Line-of-sight test from (x0, y0) to each target point."""
    n = txs.shape[0]
    out = np.empty(n, dtype=np.bool_)
    sx = int(x0 // res)
    sy = int(y0 // res)
    for i in range(n):
        out[i] = _segment_clear_one(occ, res, x0, y0, sx, sy, txs[i], tys[i])
    return out


@njit(cache=True)
def visible_cells_mask(
    occ, res, x, y, theta_deg, fov_deg, range_m, origin_x, origin_y, cell_size, size_cells
):
    """Visibility mask over a map grid: a cell is visible when its center is
    inside the world, within the FOV wedge and range, and has line of sight
    (same rule as segments_clear) from the agent."""
    out = np.zeros((size_cells, size_cells), dtype=np.bool_)
    h, w = occ.shape
    world_w = w * res
    world_h = h * res
    ix0 = max(0, int((x - range_m - origin_x) // cell_size))
    ix1 = min(size_cells - 1, int((x + range_m - origin_x) // cell_size))
    iy0 = max(0, int((y - range_m - origin_y) // cell_size))
    iy1 = min(size_cells - 1, int((y + range_m - origin_y) // cell_size))
    if ix1 < ix0 or iy1 < iy0:
        return out
    sx = int(x // res)
    sy = int(y // res)
    half_fov = fov_deg / 2.0
    r2 = range_m * range_m
    for iy in range(iy0, iy1 + 1):
        cy = origin_y + (iy + 0.5) * cell_size
        if cy < 0.0 or cy >= world_h:
            continue
        for ix in range(ix0, ix1 + 1):
            cx = origin_x + (ix + 0.5) * cell_size
            if cx < 0.0 or cx >= world_w:
                continue
            dx = cx - x
            dy = cy - y
            d2 = dx * dx + dy * dy
            if d2 > r2:
                continue
            if d2 > 0.0:
                ang = np.degrees(np.arctan2(dy, dx)) - theta_deg
                ang = -((180.0 - ang) % 360.0) + 180.0
                if abs(ang) > half_fov:
                    continue
            if _segment_clear_one(occ, res, x, y, sx, sy, cx, cy):
                out[iy, ix] = True
    return out


@njit(cache=True)
def geodesic_steps(trav, src_x, src_y, allow_corner_cut=True):
    """Dijkstra over the 8-connected grid of traversable cells.

    Edge costs are 1 straight / sqrt(2) diagonal, tracked as integer step
    counts. Returns (straight, diagonal) int32 grids, -1 where unreachable.
    The source cell is always treated as traversable. With corner cutting
    disabled a diagonal move needs both orthogonal neighbors traversable.
    """
    h, w = trav.shape
    n = h * w
    sqrt2 = np.sqrt(2.0)
    key = np.full(n, np.inf)
    stra = np.full(n, -1, dtype=np.int32)
    diag = np.full(n, -1, dtype=np.int32)
    cap = 8 * n + 8
    heap_k = np.empty(cap, dtype=np.float64)
    heap_v = np.empty(cap, dtype=np.int64)
    hs = 0

    src = src_y * w + src_x
    key[src] = 0.0
    stra[src] = 0
    diag[src] = 0
    heap_k[0] = 0.0
    heap_v[0] = src
    hs = 1

    while hs > 0:
        top_k = heap_k[0]
        u = heap_v[0]
        hs -= 1
        heap_k[0] = heap_k[hs]
        heap_v[0] = heap_v[hs]
        i = 0
        while True:
            l = 2 * i + 1
            r = l + 1
            m = i
            if l < hs and heap_k[l] < heap_k[m]:
                m = l
            if r < hs and heap_k[r] < heap_k[m]:
                m = r
            if m == i:
                break
            heap_k[i], heap_k[m] = heap_k[m], heap_k[i]
            heap_v[i], heap_v[m] = heap_v[m], heap_v[i]
            i = m
        if top_k > key[u]:
            continue
        uy = u // w
        ux = u % w
        ua = stra[u]
        ub = diag[u]
        for oy in range(-1, 2):
            for ox in range(-1, 2):
                if ox == 0 and oy == 0:
                    continue
                vx = ux + ox
                vy = uy + oy
                if vx < 0 or vx >= w or vy < 0 or vy >= h:
                    continue
                if not trav[vy, vx]:
                    continue
                if ox != 0 and oy != 0:
                    if not allow_corner_cut and not (trav[uy, vx] and trav[vy, ux]):
                        continue
                    na = ua
                    nb = ub + 1
                else:
                    na = ua + 1
                    nb = ub
                nk = na + nb * sqrt2
                v = vy * w + vx
                if nk < key[v]:
                    key[v] = nk
                    stra[v] = na
                    diag[v] = nb
                    heap_k[hs] = nk
                    heap_v[hs] = v
                    j = hs
                    hs += 1
                    while j > 0:
                        p = (j - 1) >> 1
                        if heap_k[p] <= heap_k[j]:
                            break
                        heap_k[p], heap_k[j] = heap_k[j], heap_k[p]
                        heap_v[p], heap_v[j] = heap_v[j], heap_v[p]
                        j = p
    return stra.reshape(h, w), diag.reshape(h, w)
