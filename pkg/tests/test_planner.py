import math
import time

import numpy as np
import pytest

from spheremap import (FREE, OCCUPIED, BudgetExceededError, BuildParams,
                       ClearanceField, ObstacleIndex, PlannerParams, Portal,
                       Segment, SphereMap, astar_sphere_graph, edge_traversable,
                       evaluate_path, grid_astar, plan_cached, rrt_star,
                       transition_cost)

from conftest import box_room, two_rooms_with_corridor
from oracles import random_sphere_map, ucs_optimal

PARAMS = PlannerParams(xi=7.0, d_max=2.0, r_min=0.8)


class TestTransitionCost:
    def test_clearance_above_cutoff_zeroes_risk(self):
        dl, dz = transition_cost((0, 0, 0), 3.0, (4, 0, 0), 3.0, PlannerParams(d_max=2.0))
        assert (dl, dz) == (4.0, 0.0)

    def test_direct_substitution(self):
        dl, dz = transition_cost((0, 0, 0), 1.0, (2, 0, 0), 1.0,
                                 PlannerParams(xi=7.0, d_max=2.0, r_min=0.8))
        assert dl == pytest.approx(2.0)
        assert dz == pytest.approx(14.0)

    def test_zero_weight(self):
        params = PlannerParams(xi=0.0, d_max=2.0, r_min=0.8)
        for r in (0.9, 1.5, 5.0):
            _, dz = transition_cost((0, 0, 0), r, (3, 1, 2), r, params)
            assert dz == 0.0

    def test_params_validation(self):
        with pytest.raises(ValueError):
            PlannerParams(xi=-1.0)
        with pytest.raises(ValueError):
            PlannerParams(d_max=0.5, r_min=0.8)


class TestEdgeTraversable:
    def test_containment(self):
        assert edge_traversable((0, 0, 0), 1.6, (0, 0, 0), 1.6, 0.8)

    def test_disjoint(self):
        assert not edge_traversable((0, 0, 0), 1.0, (5, 0, 0), 1.0, 0.8)

    def test_intersection_formula_case(self):
        # sqrt(3)/2 ~= 0.866 > 0.8
        assert edge_traversable((0, 0, 0), 1.0, (1, 0, 0), 1.0, 0.8)
        assert not edge_traversable((0, 0, 0), 1.0, (1, 0, 0), 1.0, 0.87)


def hand_map(chain, segments=None, portals=None):
    """SphereMap with hand-placed nodes; chain = [(pos, r), ...]."""
    smap = SphereMap(BuildParams(r_cap=8.0), seed=0)
    ids = []
    for p, r in chain:
        nid = smap._add_node(np.asarray(p, dtype=float), r)
        smap._recompute_edges(nid)
        ids.append(nid)
    if segments:
        for label, members in segments.items():
            smap.segments[label] = Segment(label, set(members), np.zeros(3), 0.0,
                                           altered=False)
            for nid in members:
                smap.nodes[nid].segment = label
            smap._refresh_bounds(label)
    if portals:
        for (s1, s2), (a, b) in portals.items():
            na, nb = smap.nodes[a], smap.nodes[b]
            from spheremap.geometry import intersection_radius
            ir = intersection_radius(na.p, na.r, nb.p, nb.r)
            smap.portals[(s1, s2)] = Portal((s1, s2), a, b, ir)
    return smap, ids


class TestAstarSphereGraph:
    def test_start_equals_goal(self):
        smap, _ = hand_map([((0, 0, 0), 2.0)])
        res = astar_sphere_graph(smap, (0.1, 0, 0), (0.1, 0, 0), PARAMS)
        assert res is not None
        assert res.cost == 0.0
        assert len(res.waypoints) == 1

    def test_two_node_chain(self):
        smap, ids = hand_map([((0, 0, 0), 1.5), ((2, 0, 0), 1.5)])
        start, goal = np.array([0.0, 0, 0]), np.array([2.0, 0, 0])
        res = astar_sphere_graph(smap, start, goal, PARAMS)
        assert res is not None
        np.testing.assert_allclose(res.waypoints[1], smap.nodes[ids[0]].p)
        np.testing.assert_allclose(res.waypoints[2], smap.nodes[ids[1]].p)
        # forced route: cost is the chained increments
        oracle = ucs_optimal(smap, start, goal, PARAMS)
        assert res.cost == oracle[2]

    def test_uncovered_endpoints_fail(self):
        smap, _ = hand_map([((0, 0, 0), 1.0)])
        assert astar_sphere_graph(smap, (5, 5, 5), (0, 0, 0), PARAMS) is None
        assert astar_sphere_graph(smap, (0, 0, 0), (5, 5, 5), PARAMS) is None

    def test_disconnected_components_fail(self):
        smap, _ = hand_map([((0, 0, 0), 1.5), ((10, 0, 0), 1.5)])
        assert astar_sphere_graph(smap, (0, 0, 0), (10, 0, 0), PARAMS) is None

    @pytest.mark.parametrize("seed", range(20))
    def test_oracle_equivalence(self, seed):
        smap, start, goal = random_sphere_map(seed)
        res = astar_sphere_graph(smap, start, goal, PARAMS)
        oracle = ucs_optimal(smap, start, goal, PARAMS)
        if res is None:
            assert oracle is None
        else:
            assert oracle is not None
            assert res.cost == oracle[2]
            assert res.length == oracle[0]
            assert res.risk == oracle[1]

    def test_heuristic_admissible_on_random_graphs(self):
        # straight-line distance never exceeds the oracle-optimal remaining cost
        for seed in range(5):
            smap, start, goal = random_sphere_map(seed, max_nodes=25)
            oracle = ucs_optimal(smap, start, goal, PARAMS)
            if oracle is None:
                continue
            h = float(np.linalg.norm(np.asarray(start) - np.asarray(goal)))
            assert h <= oracle[2] + 1e-9

    def test_xi_monotonicity(self):
        smap, start, goal = random_sphere_map(2, max_nodes=40)
        risks = []
        for xi in (0.0, 1.0, 7.0, 50.0):
            res = astar_sphere_graph(smap, start, goal,
                                     PlannerParams(xi=xi, d_max=2.0, r_min=0.8))
            if res is None:
                pytest.skip("fixture disconnected")
            risks.append(res.risk / max(xi, 1e-12) if xi else None)
        # optimal raw risk integral is non-increasing in xi
        raw = [r for r in risks if r is not None]
        assert all(b <= a + 1e-9 for a, b in zip(raw, raw[1:]))

    def test_xi_zero_reduces_to_shortest_path(self):
        smap, start, goal = random_sphere_map(4, max_nodes=40)
        params0 = PlannerParams(xi=0.0, d_max=2.0, r_min=0.8)
        res = astar_sphere_graph(smap, start, goal, params0)
        oracle = ucs_optimal(smap, start, goal, params0)
        if res is None:
            assert oracle is None
        else:
            assert res.cost == oracle[2]
            assert res.risk == 0.0


class TestPlanCached:
    def make_two_segment_map(self):
        chain = [((0.0, 0, 0), 1.6), ((2.0, 0, 0), 1.6),
                 ((4.0, 0, 0), 1.6), ((6.0, 0, 0), 1.6)]
        segments = {0: [0, 1], 1: [2, 3]}
        portals = {(0, 1): (1, 2)}
        smap, ids = hand_map(chain, segments, portals)
        for seg in smap.segments.values():
            seg.path_cache = {}
        return smap

    def test_two_segments_one_portal_decomposition(self):
        smap = self.make_two_segment_map()
        start = np.array([0.0, 0.3, 0.0])
        goal = np.array([6.0, -0.3, 0.0])
        res = plan_cached(smap, start, goal, PARAMS)
        assert res is not None
        node_pts = [smap.nodes[i].p for i in (0, 1, 2, 3)]
        expected = np.vstack([start] + node_pts + [goal])
        np.testing.assert_allclose(res.waypoints, expected)
        # cost decomposes into start->portal, crossing, portal->goal, using
        # the store's (float32-quantized) radii
        radii = [smap.nodes[i].r for i in (0, 1, 2, 3)]
        margins = ([radii[0] - float(np.linalg.norm(start - node_pts[0]))]
                   + radii
                   + [radii[3] - float(np.linalg.norm(goal - node_pts[3]))])
        pts = [start] + node_pts + [goal]
        L = Z = 0.0
        for i in range(5):
            dl, dz = transition_cost(pts[i], margins[i], pts[i + 1], margins[i + 1], PARAMS)
            L += dl
            Z += dz
        assert res.cost == pytest.approx(L + Z, rel=1e-12)

    def test_same_segment_equals_restricted_astar(self):
        smap = self.make_two_segment_map()
        start = np.array([0.0, 0.2, 0.0])
        goal = np.array([2.0, -0.2, 0.0])
        cached = plan_cached(smap, start, goal, PARAMS)
        direct = astar_sphere_graph(smap, start, goal, PARAMS, restrict=0)
        assert cached is not None and direct is not None
        assert cached.cost == pytest.approx(direct.cost, rel=1e-12)

    def test_cached_cost_at_least_full_cost(self):
        grid, c1, c2, _ = two_rooms_with_corridor()
        smap = SphereMap(BuildParams(cube_side=16.0, voxel_stride=2, ray_count=0,
                                     r_exp=3.0, r_merge=8.0), seed=0)
        for t in np.linspace(0, 1, 5):
            smap.update_iteration(grid, c1 + t * (c2 - c1))
        cached = plan_cached(smap, c1, c2, PARAMS)
        full = astar_sphere_graph(smap, c1, c2, PARAMS)
        assert cached is not None and full is not None
        assert cached.cost >= full.cost - 1e-9
        assert cached.cost <= 1.5 * full.cost

    def test_topological_disconnection(self):
        smap = self.make_two_segment_map()
        del smap.portals[(0, 1)]
        smap.adj[1].discard(2)
        smap.adj[2].discard(1)
        res = plan_cached(smap, np.array([0.0, 0, 0]), np.array([6.0, 0, 0]), PARAMS)
        assert res is None


def corridor_grid(n=12, width=5, resolution=1.0):
    dims = (n, width + 2, width + 2)
    grid = box_room(((n - 2) * resolution, width * resolution, width * resolution),
                    resolution)
    return grid


class TestGridAstar:
    def test_straight_corridor_length_only(self):
        # free corridor of 10 voxels along x; start/goal at the ends
        grid = box_room((10.0, 5.0, 5.0), resolution=1.0)
        field = ClearanceField(grid)
        start = grid.voxel_center((1, 3, 3))
        goal = grid.voxel_center((10, 3, 3))
        res = grid_astar(grid, start, goal, PARAMS, mode="length-only", field=field)
        assert res is not None
        assert res.length == pytest.approx(9.0)
        assert res.mode == "grid-length"

    def test_fully_occupied_separator(self):
        grid = box_room((10.0, 5.0, 5.0), resolution=1.0)
        grid.states[5, :, :] = OCCUPIED
        field = ClearanceField(grid)
        res = grid_astar(grid, grid.voxel_center((1, 3, 3)),
                         grid.voxel_center((10, 3, 3)), PARAMS, field=field)
        assert res is None

    def test_budget_exceeded(self):
        grid = box_room((10.0, 5.0, 5.0), resolution=1.0)
        field = ClearanceField(grid)
        with pytest.raises(BudgetExceededError):
            grid_astar(grid, grid.voxel_center((1, 3, 3)),
                       grid.voxel_center((10, 3, 3)), PARAMS, field=field, budget=2)

    def test_safety_mode_trades_length_for_risk(self):
        # wall pocket next to the straight route: safety mode detours
        grid = box_room((20.0, 9.0, 5.0), resolution=1.0)
        grid.states[8:12, 1:5, :] = OCCUPIED   # block half the corridor width
        field = ClearanceField(grid)
        start = grid.voxel_center((1, 6, 3))
        goal = grid.voxel_center((18, 6, 3))
        safety = grid_astar(grid, start, goal, PARAMS, mode="safety", field=field)
        length = grid_astar(grid, start, goal, PARAMS, mode="length-only", field=field)
        assert safety is not None and length is not None
        s_eval = evaluate_path(safety.waypoints, field, PARAMS)
        l_eval = evaluate_path(length.waypoints, field, PARAMS)
        assert s_eval[1] <= l_eval[1]          # risk no worse
        assert s_eval[0] >= l_eval[0] - 1e-9   # usually longer
        assert safety.cost <= length.cost + 1e-9

    def test_optimality_against_dijkstra(self):
        # small random grid: A* cost equals an exhaustive Dijkstra
        rng = np.random.default_rng(5)
        grid = box_room((8.0, 8.0, 4.0), resolution=1.0)
        occ = rng.random(grid.states.shape) < 0.1
        grid.states[occ] = OCCUPIED
        field = ClearanceField(grid)
        params = PlannerParams(xi=7.0, d_max=2.0, r_min=0.4)
        start = grid.voxel_center((1, 1, 2))
        goal = grid.voxel_center((8, 8, 2))
        res = grid_astar(grid, start, goal, params, field=field)
        if res is None:
            pytest.skip("fixture blocked")
        # brute-force Dijkstra over the same voxel graph
        import heapq
        free = (grid.states == FREE) & (field.field > params.r_min)
        dist = {tuple(grid.world_to_voxel(start)): 0.0}
        heap = [(0.0, tuple(grid.world_to_voxel(start)))]
        done = set()
        goal_vox = tuple(grid.world_to_voxel(goal))
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == goal_vox:
                break
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    for dk in (-1, 0, 1):
                        if (di, dj, dk) == (0, 0, 0):
                            continue
                        v = (u[0] + di, u[1] + dj, u[2] + dk)
                        if not all(0 <= v[i] < grid.states.shape[i] for i in range(3)):
                            continue
                        if not free[v] or v in done:
                            continue
                        dl = math.sqrt(di * di + dj * dj + dk * dk)
                        m = max(0.0, params.d_max - (field.field[u] + field.field[v]) / 2.0)
                        alt = d + dl + params.xi * m * m * dl
                        if alt < dist.get(v, math.inf):
                            dist[v] = alt
                            heapq.heappush(heap, (alt, v))
        assert goal_vox in dist
        assert res.cost == pytest.approx(dist[goal_vox], rel=1e-9)


class TestRrtStar:
    def test_goal_within_one_step(self):
        grid = box_room((10.0, 10.0, 10.0), resolution=1.0)
        field = ClearanceField(grid)
        start = np.array([4.0, 5.0, 5.0])
        goal = np.array([4.8, 5.0, 5.0])
        res = rrt_star(grid, start, goal, PARAMS, step=1.0, seed=0, field=field)
        assert res is not None
        assert len(res.waypoints) == 2
        np.testing.assert_allclose(res.waypoints[0], start)
        np.testing.assert_allclose(res.waypoints[-1], goal)

    def test_walled_off_goal_times_out(self):
        grid = box_room((12.0, 6.0, 6.0), resolution=1.0)
        grid.states[6, :, :] = OCCUPIED
        field = ClearanceField(grid)
        res = rrt_star(grid, np.array([2.0, 3.0, 3.0]), np.array([10.0, 3.0, 3.0]),
                       PARAMS, timeout=1.0, seed=0, field=field, max_iters=2000)
        assert res is None

    @pytest.mark.parametrize("seed", range(10))
    def test_seed_sweep_open_box(self, seed):
        grid = box_room((20.0, 20.0, 20.0), resolution=1.0)
        field = ClearanceField(grid)
        start = np.array([3.0, 3.0, 10.0])
        goal = np.array([17.0, 17.0, 10.0])
        res = rrt_star(grid, start, goal, PARAMS, timeout=10.0, seed=seed, field=field)
        assert res is not None
        _, _, _, min_clear = evaluate_path(res.waypoints, field, PARAMS)
        assert min_clear > PARAMS.r_min

    def test_deterministic_under_seed(self):
        grid = box_room((15.0, 15.0, 8.0), resolution=1.0)
        field = ClearanceField(grid)
        start = np.array([2.0, 2.0, 4.0])
        goal = np.array([13.0, 13.0, 4.0])
        r1 = rrt_star(grid, start, goal, PARAMS, seed=5, field=field)
        r2 = rrt_star(grid, start, goal, PARAMS, seed=5, field=field)
        assert r1 is not None and r2 is not None
        np.testing.assert_array_equal(r1.waypoints, r2.waypoints)


class TestEvaluatePath:
    def test_single_waypoint(self):
        index = ObstacleIndex(np.array([[3.0, 0.0, 0.0]]))
        L, Z, J, mc = evaluate_path(np.array([[0.0, 0.0, 0.0]]), index, PARAMS)
        assert (L, Z, J) == (0.0, 0.0, 0.0)
        assert mc == pytest.approx(3.0)

    def test_two_points_above_cutoff(self):
        index = ObstacleIndex(np.array([[0.0, 0.0, -5.0]]))
        wps = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
        L, Z, J, mc = evaluate_path(wps, index, PARAMS)
        assert L == pytest.approx(3.0)
        assert Z == 0.0
        assert J == pytest.approx(3.0)
        assert mc == pytest.approx(5.0)

    def test_self_consistency_with_planner(self):
        grid = box_room((10.0, 6.0, 6.0), resolution=0.5)
        field = ClearanceField(grid)
        start = grid.voxel_center((2, 6, 6))
        goal = grid.voxel_center((18, 6, 6))
        res = grid_astar(grid, start, goal, PARAMS, field=field)
        assert res is not None
        L, Z, J, _ = evaluate_path(res.waypoints, field, PARAMS)
        assert L == pytest.approx(res.length, rel=1e-6)
        assert Z == pytest.approx(res.risk, rel=1e-6)

    def test_sphere_plan_self_consistency_with_clearance_callback(self):
        grid, c1, c2, _ = two_rooms_with_corridor()
        smap = SphereMap(BuildParams(cube_side=16.0, voxel_stride=2, ray_count=0,
                                     r_exp=3.0, r_merge=8.0), seed=0)
        for t in np.linspace(0, 1, 5):
            smap.update_iteration(grid, c1 + t * (c2 - c1))
        field = ClearanceField(grid)
        res = astar_sphere_graph(smap, c1, c2, PARAMS,
                                 clearance_at=field.nearest_distance)
        assert res is not None
        L, Z, J, mc = evaluate_path(res.waypoints, field, PARAMS)
        assert L == pytest.approx(res.length, rel=1e-6)
        assert Z == pytest.approx(res.risk, rel=1e-6, abs=1e-9)
        assert mc > PARAMS.r_min
        cached = plan_cached(smap, c1, c2, PARAMS, clearance_at=field.nearest_distance)
        assert cached is not None
        L, Z, J, mc = evaluate_path(cached.waypoints, field, PARAMS)
        assert L == pytest.approx(cached.length, rel=1e-6)
        assert Z == pytest.approx(cached.risk, rel=1e-6, abs=1e-9)
        assert mc > PARAMS.r_min
