import math

import numpy as np
import pytest

from multion import world as W
from multion.errors import InvalidPoint, ParseError, Unreachable

import oracles


def make_text(rows, res=1.0):
    return f"multion-world v1 resolution={res}\n" + "\n".join(rows) + "\n"


class TestLoadWorld:
    def test_single_free_cell(self):
        w = W.load_world(make_text(["###", "#.#", "###"]))
        assert (~w.occupancy).sum() == 1
        assert not w.occupancy[1, 1]

    def test_border_forced_occupied(self):
        w = W.load_world(make_text(["....."] * 5))
        assert (~w.occupancy).sum() == 9

    def test_ragged_rows(self):
        with pytest.raises(ParseError):
            W.load_world(make_text(["#####", "####"]))

    def test_unknown_character(self):
        with pytest.raises(ParseError):
            W.load_world(make_text(["###", "#x#", "###"]))

    def test_zero_free_cells(self):
        with pytest.raises(ParseError):
            W.load_world(make_text(["###", "###", "###"]))

    def test_bad_header(self):
        with pytest.raises(ParseError):
            W.load_world("multion-world v9 resolution=1.0\n###\n#.#\n###\n")

    def test_roundtrip(self):
        w = W.generate_world(3, size_m=8.0, room_count=3)
        again = W.load_world(W.world_to_text(w))
        assert np.array_equal(w.occupancy, again.occupancy)
        assert again.resolution == w.resolution


class TestGenerateWorld:
    def test_deterministic(self):
        a = W.generate_world(11, size_m=10.0, room_count=4)
        b = W.generate_world(11, size_m=10.0, room_count=4)
        assert np.array_equal(a.occupancy, b.occupancy)

    def test_seeds_differ(self):
        a = W.generate_world(1, size_m=10.0, room_count=4)
        b = W.generate_world(2, size_m=10.0, room_count=4)
        assert not np.array_equal(a.occupancy, b.occupancy)

    @pytest.mark.parametrize("seed", [0, 5, 9])
    def test_single_component(self, seed):
        w = W.generate_world(seed, size_m=9.0, room_count=4)
        assert oracles.flood_fill_components(~w.occupancy) == 1

    def test_border_occupied(self):
        w = W.generate_world(4, size_m=8.0, room_count=3)
        assert w.occupancy[0, :].all() and w.occupancy[-1, :].all()
        assert w.occupancy[:, 0].all() and w.occupancy[:, -1].all()

    def test_preconditions(self):
        with pytest.raises(ValueError):
            W.generate_world(0, size_m=3.0)
        with pytest.raises(ValueError):
            W.generate_world(0, size_m=8.0, corridor_width_m=0.2)


def open_room(size=50, res=0.1):
    occ = np.zeros((size, size), dtype=bool)
    return W.GridWorld(occ, res, name="room")


class TestIsNavigable:
    def test_clear_space(self):
        w = open_room()
        assert W.is_navigable(w, 2.5, 2.5, 0.1)

    def test_inside_wall(self):
        w = open_room()
        assert not W.is_navigable(w, 0.05, 2.5, 0.0)

    def test_near_wall_face(self):
        # Wall face at x = 1.0; disc of radius 0.1 centered 0.05 m away overlaps.
        occ = np.zeros((50, 50), dtype=bool)
        occ[:, :10] = True
        w = W.GridWorld(occ, 0.1)
        assert not W.is_navigable(w, 1.05, 2.5, 0.1)
        assert W.is_navigable(w, 1.15, 2.5, 0.1)

    def test_out_of_bounds(self):
        w = open_room()
        assert not W.is_navigable(w, -1.0, 2.0, 0.1)
        assert not W.is_navigable(w, 2.0, 99.0, 0.1)

    def test_matches_bruteforce_on_random_worlds(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            w = oracles.random_world(rng)
            x = rng.uniform(0, w.width_m)
            y = rng.uniform(0, w.height_m)
            r = rng.uniform(0.0, 0.25)
            got = W.is_navigable(w, x, y, r)
            expect = brute_navigable(w, x, y, r)
            assert got == expect

    def test_navigable_pose_cell_is_traversable(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            w = oracles.random_world(rng)
            x = rng.uniform(0, w.width_m)
            y = rng.uniform(0, w.height_m)
            if W.is_navigable(w, x, y, 0.1):
                ix, iy = w.cell_of(x, y)
                assert w.traversable_mask(0.1)[iy, ix]


def brute_navigable(w, x, y, r):
    if not (r <= x <= w.width_m - r and r <= y <= w.height_m - r):
        return False
    for iy in range(w.height_cells):
        for ix in range(w.width_cells):
            if not w.occupancy[iy, ix]:
                continue
            px = min(max(x, ix * w.resolution), (ix + 1) * w.resolution)
            py = min(max(y, iy * w.resolution), (iy + 1) * w.resolution)
            if math.hypot(px - x, py - y) < r:
                return False
    return True


class TestGeodesics:
    def test_straight_line_distance(self):
        w = W.GridWorld(np.zeros((10, 10), dtype=bool), 1.0)
        assert W.geodesic_distance(w, (1.5, 1.5), (1.5, 5.5), 0.0) == 4.0

    def test_identity(self):
        w = open_room()
        assert W.geodesic_distance(w, (2.0, 2.0), (2.0, 2.0)) == 0.0

    def test_unreachable(self):
        occ = np.zeros((20, 20), dtype=bool)
        occ[:, 10] = True
        w = W.GridWorld(occ, 0.1)
        with pytest.raises(Unreachable):
            W.geodesic_distance(w, (0.5, 0.5), (1.5, 0.5), 0.0)

    def test_invalid_point(self):
        w = open_room()
        with pytest.raises(InvalidPoint):
            W.geodesic_distance(w, (0.05, 0.05), (2.0, 2.0), 0.1)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            w = oracles.random_world(rng)
            pts = sample_navigable_points(w, rng, 2)
            if pts is None:
                continue
            a, b = pts
            try:
                dab = W.geodesic_distance(w, a, b, 0.0)
                dba = W.geodesic_distance(w, b, a, 0.0)
            except Unreachable:
                continue
            assert dab == dba

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            w = oracles.random_world(rng)
            pts = sample_navigable_points(w, rng, 3)
            if pts is None:
                continue
            a, b, c = pts
            try:
                dac = W.geodesic_distance(w, a, c, 0.0)
                dab = W.geodesic_distance(w, a, b, 0.0)
                dbc = W.geodesic_distance(w, b, c, 0.0)
            except Unreachable:
                continue
            assert dac <= dab + dbc + 1e-9

    def test_field_zero_at_target(self):
        w = open_room()
        f = W.geodesic_field(w, (2.55, 3.55))
        ix, iy = w.cell_of(2.55, 3.55)
        assert f[iy, ix] == 0.0

    def test_field_matches_pairwise_dijkstra_exactly(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            w = oracles.random_world(rng, size=14)
            pts = sample_navigable_points(w, rng, 1, radius=0.0)
            if pts is None:
                continue
            (b,) = pts
            field = W.geodesic_field(w, b, 0.0)
            src = w.cell_of(*b)
            best = oracles.dijkstra_pairs(~w.occupancy, src)
            for iy in range(w.height_cells):
                for ix in range(w.width_cells):
                    if w.occupancy[iy, ix]:
                        assert field[iy, ix] == np.inf
                    elif (ix, iy) in best:
                        a_, b_ = best[(ix, iy)]
                        assert field[iy, ix] == W.steps_to_meters(a_, b_, w.resolution)
                    else:
                        assert field[iy, ix] == np.inf

    def test_field_lipschitz(self):
        w = W.generate_world(6, size_m=8.0, room_count=3)
        nav = w.navigable_mask(0.1)
        ys, xs = np.where(nav)
        b = w.cell_center(xs[0], ys[0])
        f = W.geodesic_field(w, b, 0.1)
        lim = w.resolution * math.sqrt(2) + 1e-12
        for dy, dx in ((0, 1), (1, 0), (1, 1)):
            a0 = f[:-1 or None, :]
            shifted = f[dy:, dx:]
            base = f[: f.shape[0] - dy, : f.shape[1] - dx]
            both = np.isfinite(shifted) & np.isfinite(base)
            assert (np.abs(shifted[both] - base[both]) <= lim).all()


def sample_navigable_points(w, rng, count, radius=0.1, tries=200):
    pts = []
    for _ in range(tries):
        x = rng.uniform(0, w.width_m)
        y = rng.uniform(0, w.height_m)
        if W.is_navigable(w, x, y, radius):
            pts.append((x, y))
            if len(pts) == count:
                return pts
    return None


class TestRaycast:
    def test_perpendicular_wall(self):
        occ = np.zeros((60, 60), dtype=bool)
        occ[:, 30:] = True  # wall face at x = 3.0
        w = W.GridWorld(occ, 0.1)
        hit = W.raycast(w, [], (2.0, 3.0), 0.0, 10.0)
        assert hit.kind == "wall"
        assert hit.distance == pytest.approx(1.0, abs=1e-9)

    def test_object_disc(self):
        w = open_room()
        obj = W.ObjectInstance(3, (4.0, 2.0), radius=0.05)
        hit = W.raycast(w, [obj], (2.0, 2.0), 0.0, 10.0)
        assert hit.kind == "object" and hit.category == 3
        assert hit.distance == pytest.approx(1.95, abs=1e-12)

    def test_max_range(self):
        w = W.GridWorld(np.zeros((200, 200), dtype=bool), 0.1)
        hit = W.raycast(w, [], (1.0, 10.0), 0.0, 5.0)
        assert hit.kind == "max-range" and hit.distance == 5.0

    def test_matches_analytic_oracle(self):
        rng = np.random.default_rng(5)
        checked = 0
        for _ in range(30):
            w = oracles.random_world(rng)
            pts = sample_navigable_points(w, rng, 1, radius=0.0)
            if pts is None:
                continue
            (o,) = pts
            ang = rng.uniform(0, 360)
            got = W.raycast(w, [], o, ang, 3.0)
            expect = oracles.ray_wall_distance(w.occupancy, w.resolution, o, ang, 3.0)
            assert got.distance == pytest.approx(expect, abs=1e-9)
            checked += 1
        assert checked >= 20

    def test_obstacle_shortens_ray(self):
        occ = np.zeros((60, 60), dtype=bool)
        w1 = W.GridWorld(occ, 0.1)
        occ2 = occ.copy()
        occ2[28:32, 40] = True
        w2 = W.GridWorld(occ2, 0.1)
        d1 = W.raycast(w1, [], (1.0, 3.0), 0.0, 10.0).distance
        d2 = W.raycast(w2, [], (1.0, 3.0), 0.0, 10.0).distance
        assert d2 < d1


class Geometry:
    def __init__(self, size_cells, cell_size, origin=(0.0, 0.0)):
        self.size_cells = size_cells
        self.cell_size = cell_size
        self.origin = origin


class TestVisibleCells:
    def setup_method(self):
        occ = np.zeros((80, 80), dtype=bool)
        occ[20:60, 40] = True  # vertical wall segment at x = 4.0..4.1
        self.world = W.GridWorld(occ, 0.1)
        self.geom = Geometry(20, 0.4)

    def test_cell_behind_agent_excluded(self):
        vis = W.visible_cells(self.world, (4.0, 1.0, 0.0), 79.0, 5.0, self.geom)
        behind = self.geom_cell(2.0, 1.0)
        assert behind not in vis

    def test_cell_beyond_range_excluded(self):
        vis = W.visible_cells(self.world, (1.0, 1.0, 0.0), 79.0, 5.0, self.geom)
        far = self.geom_cell(7.2, 1.0)
        assert far not in vis

    def test_cell_behind_wall_excluded(self):
        vis = W.visible_cells(self.world, (2.0, 4.0, 0.0), 79.0, 5.0, self.geom)
        hidden = self.geom_cell(6.0, 4.0)
        assert hidden not in vis

    def test_cell_in_front_included(self):
        vis = W.visible_cells(self.world, (1.0, 1.0, 0.0), 79.0, 5.0, self.geom)
        ahead = self.geom_cell(2.6, 1.0)
        assert ahead in vis

    def geom_cell(self, x, y):
        return (int(x // self.geom.cell_size), int(y // self.geom.cell_size))

    def test_monotone_in_range_and_fov(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            x = rng.uniform(0.5, 7.5)
            y = rng.uniform(0.5, 7.5)
            theta = rng.uniform(0, 360)
            small = W.visible_cells(self.world, (x, y, theta), 60.0, 3.0, self.geom)
            big_range = W.visible_cells(self.world, (x, y, theta), 60.0, 5.0, self.geom)
            big_fov = W.visible_cells(self.world, (x, y, theta), 100.0, 3.0, self.geom)
            assert small <= big_range
            assert small <= big_fov

    def test_matches_slow_oracle(self):
        rng = np.random.default_rng(7)
        geom = Geometry(8, 0.4)
        for _ in range(15):
            w = oracles.random_world(rng, size=32, res=0.1)
            pts = sample_navigable_points(w, rng, 1, radius=0.0)
            if pts is None:
                continue
            pose = (pts[0][0], pts[0][1], rng.uniform(0, 360))
            got = W.visible_cells(w, pose, 79.0, 2.5, geom)
            expect = oracles.visible_cells_slow(w, pose, 79.0, 2.5, geom)
            assert got == expect
