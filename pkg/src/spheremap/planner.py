"""Safety-aware path planning.

Edge costs follow the discretized criterion: a step contributes its length
plus ``xi * max(0, d_max - mean clearance)^2 * length`` of risk. Planners over
the sphere map (full graph and cached portal planning) and two occupancy-grid
baselines (A* in safety / length-only mode, RRT*) all share this cost model,
the Euclidean-distance heuristic, and the clearance floor ``r_min``.

All planners are pure functions over read-only inputs; run them between map
updates or against a snapshot.
"""

from __future__ import annotations

import heapq
import math
import time
from array import array
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import geometry
from .errors import BudgetExceededError
from .voxelgrid import FREE, OccupancyGrid, UpdateCube, frontier_points, obstacle_points


@dataclass
class PlannerParams:
    xi: float = 7.0
    d_max: float = 2.0
    r_min: float = 0.8

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        if not self.d_max >= self.r_min > 0:
            raise ValueError("need d_max >= r_min > 0")


@dataclass
class PlanResult:
    """A planned path with its per-waypoint clearances and cost split."""

    waypoints: np.ndarray
    clearances: np.ndarray
    length: float
    risk: float
    mode: str
    planning_time: float = 0.0

    @property
    def cost(self) -> float:
        return self.length + self.risk

    @property
    def min_clearance(self) -> float:
        return float(np.min(self.clearances))

    def to_record(self) -> str:
        """Line-oriented text record consumed by the bench CSV writer."""
        pts = ";".join(f"{p[0]:.4f},{p[1]:.4f},{p[2]:.4f}" for p in self.waypoints)
        return (f"{self.mode} {self.planning_time:.6f} {self.length:.6f} "
                f"{self.risk:.6f} {self.cost:.6f} {pts}")


def transition_cost(p1, r1: float, p2, r2: float, params: PlannerParams) -> tuple[float, float]:
    """(length, risk) increment of a straight step between two cleared points."""
    dl = float(np.linalg.norm(np.asarray(p1, dtype=float) - np.asarray(p2, dtype=float)))
    m = max(0.0, params.d_max - (r1 + r2) / 2.0)
    return dl, params.xi * m * m * dl


def edge_traversable(p1, r1: float, p2, r2: float, r_min: float) -> bool:
    """Sphere-graph edge rule: the intersection circle must clear r_min."""
    return geometry.intersection_radius(p1, r1, p2, r2) > r_min


def _chain_cost(waypoints, clearances, params: PlannerParams) -> tuple[float, float]:
    length = 0.0
    risk = 0.0
    for i in range(len(waypoints) - 1):
        dl, dz = transition_cost(waypoints[i], clearances[i],
                                 waypoints[i + 1], clearances[i + 1], params)
        length += dl
        risk += dz
    return length, risk


def evaluate_path(waypoints, clearance_source, params: PlannerParams):
    """(L, Z, J, min clearance) of a waypoint path, clearances re-queried."""
    fn = _clearance_fn(clearance_source)
    waypoints = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    clearances = np.array([fn(p) for p in waypoints])
    if len(waypoints) == 1:
        return 0.0, 0.0, 0.0, float(clearances[0])
    length, risk = _chain_cost(waypoints, clearances, params)
    return length, risk, length + risk, float(np.min(clearances))


def _clearance_fn(source):
    if callable(source):
        return source
    if hasattr(source, "nearest_distance"):
        return source.nearest_distance
    raise TypeError("clearance source must be callable or provide nearest_distance")


# ----------------------------------------------------------------------
# sphere-graph planning
# ----------------------------------------------------------------------

def _attach(smap, p, restrict=None, segmented_only=False):
    """Containing sphere with the largest clearance margin r - |p - center|."""
    p = np.asarray(p, dtype=float)
    best = None
    best_margin = -math.inf
    for nid in smap.node_index.within_radius(p, smap.params.r_cap):
        node = smap.nodes[nid]
        if restrict is not None and node.segment != restrict:
            continue
        if segmented_only and node.segment is None:
            continue
        margin = node.r - float(np.linalg.norm(p - node.p))
        if margin >= 0.0 and margin > best_margin:
            best, best_margin = nid, margin
    return best, best_margin


def _graph_costs(smap, params: PlannerParams) -> dict[int, list[tuple[int, float]]]:
    """Per-node neighbor/cost lists; cached on the map until it mutates."""
    key = (smap.mutation_token, params.xi, params.d_max, params.r_min)
    cached = getattr(smap, "_plan_ctx", None)
    if cached is not None and cached[0] == key:
        return cached[1]
    edges = np.array([(a, b) for a, b in smap.edges()], dtype=np.int64).reshape(-1, 2)
    adj: dict[int, list[tuple[int, float]]] = {nid: [] for nid in smap.nodes}
    if len(edges):
        pa = np.array([smap.nodes[a].p for a in edges[:, 0]])
        pb = np.array([smap.nodes[b].p for b in edges[:, 1]])
        ra = np.array([smap.nodes[a].r for a in edges[:, 0]])
        rb = np.array([smap.nodes[b].r for b in edges[:, 1]])
        dl = np.linalg.norm(pa - pb, axis=1)
        m = np.maximum(0.0, params.d_max - (ra + rb) / 2.0)
        w = dl + params.xi * m * m * dl
        for (a, b), wv in zip(edges, w):
            wf = float(wv)
            adj[int(a)].append((int(b), wf))
            adj[int(b)].append((int(a), wf))
    smap._plan_ctx = (key, adj)
    return adj


def astar_nodes(smap, start_id: int, goal_id: int, params: PlannerParams,
                restrict=None) -> tuple[list[int], float] | None:
    """Optimal node-id path between two sphere nodes (optionally one segment)."""
    if start_id == goal_id:
        return [start_id], 0.0
    nodes = smap.nodes
    goal_p = nodes[goal_id].p
    g_score = {start_id: 0.0}
    came: dict[int, int] = {}
    closed: set[int] = set()
    h0 = float(np.linalg.norm(nodes[start_id].p - goal_p))
    heap = [(h0, h0, start_id)]
    members = None if restrict is None else smap.segments[restrict].members
    while heap:
        _, _, u = heapq.heappop(heap)
        if u in closed:
            continue
        closed.add(u)
        if u == goal_id:
            path = [u]
            while path[-1] != start_id:
                path.append(came[path[-1]])
            path.reverse()
            return path, g_score[u]
        nu = nodes[u]
        gu = g_score[u]
        for v in smap.adj[u]:
            if v in closed or (members is not None and v not in members):
                continue
            nv = nodes[v]
            dl, dz = transition_cost(nu.p, nu.r, nv.p, nv.r, params)
            alt = gu + dl + dz
            if alt < g_score.get(v, math.inf):
                g_score[v] = alt
                came[v] = u
                hv = float(np.linalg.norm(nv.p - goal_p))
                heapq.heappush(heap, (alt + hv, hv, v))
    return None


def _finish_sphere_result(smap, node_path, start, goal, s_margin, g_margin,
                          mode, t0, params, clearance_at=None):
    nodes = smap.nodes
    waypoints = np.vstack([start] + [nodes[i].p for i in node_path] + [goal])
    clearances = np.array([s_margin] + [nodes[i].r for i in node_path] + [g_margin])
    if clearance_at is not None:
        clearances[0] = clearance_at(start)
        clearances[-1] = clearance_at(goal)
    length, risk = _chain_cost(waypoints, clearances, params)
    return PlanResult(waypoints, clearances, length, risk, mode,
                      planning_time=time.perf_counter() - t0)


def astar_sphere_graph(smap, start, goal, params: PlannerParams,
                       restrict=None, clearance_at=None) -> PlanResult | None:
    """A* over the whole sphere graph (or one segment when ``restrict`` is set)."""
    t0 = time.perf_counter()
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    s_id, s_margin = _attach(smap, start, restrict)
    g_id, g_margin = _attach(smap, goal, restrict)
    if s_id is None or g_id is None:
        return None
    if np.array_equal(start, goal):
        cl = clearance_at(start) if clearance_at is not None else s_margin
        return PlanResult(start.reshape(1, 3), np.array([cl]), 0.0, 0.0,
                          "full-graph", planning_time=time.perf_counter() - t0)
    if s_id == g_id:
        return _finish_sphere_result(smap, [s_id], start, goal, s_margin, g_margin,
                                     "full-graph", t0, params, clearance_at)

    nodes = smap.nodes
    members = None if restrict is None else smap.segments[restrict].members
    adj = _graph_costs(smap, params) if restrict is None else None

    dl, dz = transition_cost(start, s_margin, nodes[s_id].p, nodes[s_id].r, params)
    g_score = {s_id: dl + dz}
    came: dict[int, int] = {}
    closed: set[int] = set()
    h0 = float(np.linalg.norm(nodes[s_id].p - goal))
    heap = [(g_score[s_id] + h0, h0, s_id)]
    found = False
    while heap:
        _, _, u = heapq.heappop(heap)
        if u in closed:
            continue
        closed.add(u)
        if u == g_id:
            found = True
            break
        gu = g_score[u]
        if adj is not None:
            for v, w in adj[u]:
                if v in closed:
                    continue
                alt = gu + w
                if alt < g_score.get(v, math.inf):
                    g_score[v] = alt
                    came[v] = u
                    hv = float(np.linalg.norm(nodes[v].p - goal))
                    heapq.heappush(heap, (alt + hv, hv, v))
        else:
            nu = nodes[u]
            for v in smap.adj[u]:
                if v in closed or v not in members:
                    continue
                nv = nodes[v]
                dl, dz = transition_cost(nu.p, nu.r, nv.p, nv.r, params)
                alt = gu + dl + dz
                if alt < g_score.get(v, math.inf):
                    g_score[v] = alt
                    came[v] = u
                    hv = float(np.linalg.norm(nv.p - goal))
                    heapq.heappush(heap, (alt + hv, hv, v))
    if not found:
        return None
    path = [g_id]
    while path[-1] != s_id:
        path.append(came[path[-1]])
    path.reverse()
    return _finish_sphere_result(smap, path, start, goal, s_margin, g_margin,
                                 "full-graph", t0, params, clearance_at)


def _segment_dijkstra(smap, point, margin, attach_id, label, params):
    """Costs and parent links from an off-graph point to all nodes of one segment."""
    nodes = smap.nodes
    members = smap.segments[label].members
    dl, dz = transition_cost(point, margin, nodes[attach_id].p, nodes[attach_id].r, params)
    dist = {attach_id: dl + dz}
    came: dict[int, int] = {}
    heap = [(dist[attach_id], attach_id)]
    done: set[int] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        nu = nodes[u]
        for v in smap.adj[u]:
            if v in done or v not in members:
                continue
            nv = nodes[v]
            dl, dz = transition_cost(nu.p, nu.r, nv.p, nv.r, params)
            alt = d + dl + dz
            if alt < dist.get(v, math.inf):
                dist[v] = alt
                came[v] = u
                heapq.heappush(heap, (alt, v))
    return dist, came


def _unwind(came, attach_id, target):
    path = [target]
    while path[-1] != attach_id:
        path.append(came[path[-1]])
    path.reverse()
    return path


def _meta_static(smap, params: PlannerParams):
    """Portal-level meta-graph shared by all cached queries; rebuilt only when
    the map mutates. Nodes are portal endpoints; edges are portal crossings
    and cached intra-segment paths."""
    key = (smap.mutation_token, params.xi, params.d_max, params.r_min)
    cached = getattr(smap, "_meta_ctx", None)
    if cached is not None and cached[0] == key:
        return cached[1]
    meta: dict[int, list[tuple[object, float, tuple]]] = {}

    def meta_node(nid):
        if nid not in meta:
            meta[nid] = []
        return nid

    for pair, portal in smap.portals.items():
        a, b = meta_node(portal.a), meta_node(portal.b)
        na, nb = smap.nodes[portal.a], smap.nodes[portal.b]
        dl, dz = transition_cost(na.p, na.r, nb.p, nb.r, params)
        meta[a].append((b, dl + dz, ("cross", portal.a, portal.b)))
        meta[b].append((a, dl + dz, ("cross", portal.b, portal.a)))
    for label, seg in smap.segments.items():
        for (u, v), (path, cost) in seg.path_cache.items():
            meta_node(u)
            meta_node(v)
            meta[u].append((v, cost, ("cached", label, (u, v), False)))
            meta[v].append((u, cost, ("cached", label, (u, v), True)))
    smap._meta_ctx = (key, meta)
    return meta


def plan_cached(smap, start, goal, params: PlannerParams,
                clearance_at=None) -> PlanResult | None:
    """Long-distance planning through portals and cached intra-segment paths.

    Searches a small meta-graph over the two endpoints and all portal
    endpoints; segment interiors are crossed via the precomputed portal-pair
    paths, so only the two endpoint attachments need fresh graph search.
    """
    t0 = time.perf_counter()
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    s_id, s_margin = _attach(smap, start, segmented_only=True)
    g_id, g_margin = _attach(smap, goal, segmented_only=True)
    if s_id is None or g_id is None:
        return None
    if np.array_equal(start, goal):
        cl = clearance_at(start) if clearance_at is not None else s_margin
        return PlanResult(start.reshape(1, 3), np.array([cl]), 0.0, 0.0,
                          "cached", planning_time=time.perf_counter() - t0)
    s_label = smap.nodes[s_id].segment
    g_label = smap.nodes[g_id].segment

    s_dist, s_came = _segment_dijkstra(smap, start, s_margin, s_id, s_label, params)
    g_dist, g_came = _segment_dijkstra(smap, goal, g_margin, g_id, g_label, params)

    # Direct same-segment route, kept as a candidate alongside the meta-path.
    direct = None
    if s_label == g_label and g_id in s_dist:
        dl, dz = transition_cost(smap.nodes[g_id].p, smap.nodes[g_id].r, goal, g_margin, params)
        direct = (s_dist[g_id] + dl + dz, _unwind(s_came, s_id, g_id))

    static = _meta_static(smap, params)
    extra: dict[object, list[tuple[object, float, tuple]]] = {"S": [], "G": []}
    for e in smap.segment_portal_nodes(s_label):
        if e in s_dist:
            extra["S"].append((e, s_dist[e], ("start", e)))
    for e in smap.segment_portal_nodes(g_label):
        if e in g_dist:
            ne = smap.nodes[e]
            dl, dz = transition_cost(ne.p, ne.r, goal, g_margin, params)
            extra.setdefault(e, []).append(("G", g_dist[e] + dl + dz, ("goal", e)))

    meta_cost, meta_steps = _meta_dijkstra_overlay(static, extra)
    if meta_cost is None and direct is None:
        return None

    if direct is not None and (meta_cost is None or direct[0] <= meta_cost):
        node_path = direct[1]
        dl, dz = transition_cost(smap.nodes[g_id].p, smap.nodes[g_id].r, goal, g_margin, params)
    else:
        node_path = []
        for kind, *info in meta_steps:
            if kind == "start":
                node_path.extend(_unwind(s_came, s_id, info[0]))
            elif kind == "cross":
                node_path.append(info[1])
            elif kind == "cached":
                label, pair, reverse = info
                seq = list(smap.segments[label].path_cache[pair][0])
                if reverse:
                    seq.reverse()
                node_path.extend(seq[1:] if node_path and seq[0] == node_path[-1] else seq)
                continue
            elif kind == "goal":
                tail = _unwind(g_came, g_id, info[0])
                tail.reverse()
                node_path.extend(tail[1:] if node_path and tail[0] == node_path[-1] else tail)
        node_path = _dedupe(node_path)
    return _finish_plan_cached(smap, node_path, start, goal, s_margin, g_margin,
                               t0, params, clearance_at)


def _dedupe(seq):
    out = [seq[0]]
    for x in seq[1:]:
        if x != out[-1]:
            out.append(x)
    return out


def _finish_plan_cached(smap, node_path, start, goal, s_margin, g_margin,
                        t0, params, clearance_at):
    res = _finish_sphere_result(smap, node_path, start, goal, s_margin, g_margin,
                                "cached", t0, params, clearance_at)
    return res


def _meta_dijkstra_overlay(static, extra):
    """Dijkstra over the static meta-graph plus per-query endpoint edges."""
    dist = {"S": 0.0}
    came = {}
    heap = [(0.0, 0, "S")]
    done = set()
    order = 0
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == "G":
            steps = []
            cur = "G"
            while cur != "S":
                prev, step = came[cur]
                steps.append(step)
                cur = prev
            steps.reverse()
            return d, steps
        for edges in (static.get(u, ()), extra.get(u, ())):
            for v, w, step in edges:
                if v in done:
                    continue
                alt = d + w
                if alt < dist.get(v, math.inf):
                    dist[v] = alt
                    came[v] = (u, step)
                    order += 1
                    heapq.heappush(heap, (alt, order, v))
    return None, None


# ----------------------------------------------------------------------
# occupancy-grid baselines
# ----------------------------------------------------------------------

class ClearanceField:
    """Per-voxel and continuous clearance against a grid's obstacle set.

    The obstacle set is the union of occupied-voxel and frontier centroids,
    matching what bounds sphere radii. Building the field is a one-off,
    untimed precomputation for the grid baselines.
    """

    def __init__(self, grid: OccupancyGrid):
        self.grid = grid
        span = float(np.max(grid.world_max() - grid.world_min()))
        cube = UpdateCube(0.5 * (grid.world_min() + grid.world_max()), span + 2 * grid.resolution)
        pts = np.concatenate([obstacle_points(grid, cube),
                              frontier_points(grid, cube)], axis=0)
        self.obstacles = pts
        self._tree = cKDTree(pts) if len(pts) else None
        self.field = np.zeros(grid.states.shape)
        free = grid.states == FREE
        if self._tree is not None and free.any():
            idx = np.argwhere(free)
            centers = grid.origin + grid.resolution * (idx + 0.5)
            d, _ = self._tree.query(centers)
            self.field[free] = d
        elif free.any():
            self.field[free] = np.inf

    def nearest_distance(self, p) -> float:
        if self._tree is None:
            return math.inf
        d, _ = self._tree.query(np.asarray(p, dtype=float))
        return float(d)

    def nearest_distances(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        if self._tree is None:
            return np.full(len(pts), np.inf)
        d, _ = self._tree.query(pts)
        return np.asarray(d, dtype=float)


_GRID_OFFSETS = [(di, dj, dk) for di in (-1, 0, 1) for dj in (-1, 0, 1)
                 for dk in (-1, 0, 1) if (di, dj, dk) != (0, 0, 0)]


def grid_astar(grid: OccupancyGrid, start, goal, params: PlannerParams,
               mode: str = "safety", field: ClearanceField | None = None,
               budget: int | None = None) -> PlanResult | None:
    """Optimal A* over 26-connected free voxels whose clearance exceeds r_min.

    ``mode`` 'safety' uses the risk-augmented transition cost with per-voxel
    clearances; 'length-only' uses pure path length. A node-expansion budget
    overrun raises BudgetExceededError.
    """
    if mode not in ("safety", "length-only"):
        raise ValueError(f"unknown mode {mode!r}")
    t0 = time.perf_counter()
    if field is None:
        field = ClearanceField(grid)
    s_vox = grid.world_to_voxel(start)
    g_vox = grid.world_to_voxel(goal)
    if s_vox is None or g_vox is None:
        return None

    res = grid.resolution
    nx, ny, nz = grid.states.shape
    pny, pnz = ny + 2, nz + 2
    trav = (grid.states == FREE) & (field.field > params.r_min)
    if not (trav[s_vox] and trav[g_vox]):
        return None
    trav_flat = bytes(np.pad(trav, 1).ravel())
    clear_flat = array("d", np.pad(field.field, 1).ravel())

    def flat(v):
        return ((v[0] + 1) * pny + (v[1] + 1)) * pnz + (v[2] + 1)

    offsets = []
    for di, dj, dk in _GRID_OFFSETS:
        offsets.append(((di * pny + dj) * pnz + dk,
                        res * math.sqrt(di * di + dj * dj + dk * dk)))

    s_idx, g_idx = flat(s_vox), flat(g_vox)
    gi, gj, gk = g_vox
    total = (nx + 2) * pny * pnz
    g_score = array("d", [math.inf]) * total
    closed = bytearray(total)
    came: dict[int, int] = {}
    xi, d_max, r_min = params.xi, params.d_max, params.r_min
    safety = mode == "safety"

    def heur(v):
        k = v % pnz - 1
        rest = v // pnz
        j = rest % pny - 1
        i = rest // pny - 1
        return res * math.sqrt((i - gi) ** 2 + (j - gj) ** 2 + (k - gk) ** 2)

    g_score[s_idx] = 0.0
    h0 = heur(s_idx)
    heap = [(h0, h0, s_idx)]
    expansions = 0
    found = False
    while heap:
        _, _, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = 1
        if u == g_idx:
            found = True
            break
        expansions += 1
        if budget is not None and expansions > budget:
            raise BudgetExceededError(f"grid A* exceeded {budget} expansions")
        gu = g_score[u]
        cu = clear_flat[u]
        for off, dl in offsets:
            v = u + off
            if not trav_flat[v] or closed[v]:
                continue
            if safety:
                m = d_max - (cu + clear_flat[v]) * 0.5
                w = dl + xi * m * m * dl if m > 0.0 else dl
            else:
                w = dl
            alt = gu + w
            if alt < g_score[v]:
                g_score[v] = alt
                came[v] = u
                hv = heur(v)
                heapq.heappush(heap, (alt + hv, hv, v))
    if not found:
        return None

    idx_path = [g_idx]
    while idx_path[-1] != s_idx:
        idx_path.append(came[idx_path[-1]])
    idx_path.reverse()
    vox = []
    for v in idx_path:
        k = v % pnz - 1
        rest = v // pnz
        vox.append((rest // pny - 1, rest % pny - 1, k))
    waypoints = grid.origin + res * (np.array(vox, dtype=float) + 0.5)
    clearances = np.array([field.field[v] for v in vox])
    length, risk = _chain_cost(waypoints, clearances, params)
    mode_name = "grid" if safety else "grid-length"
    return PlanResult(waypoints, clearances, length, risk, mode_name,
                      planning_time=time.perf_counter() - t0)


def rrt_star(grid: OccupancyGrid, start, goal, params: PlannerParams,
             timeout: float = 10.0, step: float = 1.0, rewire_radius: float = 3.0,
             seed: int = 0, field: ClearanceField | None = None,
             goal_bias: float = 0.05, max_iters: int | None = None) -> PlanResult | None:
    """RRT* returning its first solution (no post-solution optimization).

    Steering segments are validated by sampling clearance and the free-state
    at quarter-resolution spacing. Deterministic under a fixed seed; the
    timeout only decides whether a solution is found in time.
    """
    t0 = time.perf_counter()
    if field is None:
        field = ClearanceField(grid)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    rng = np.random.default_rng(seed)
    spacing = grid.resolution / 4.0

    def segment_valid(a, b) -> bool:
        d = float(np.linalg.norm(b - a))
        n = max(2, int(math.ceil(d / spacing)) + 1)
        ts = np.linspace(0.0, 1.0, n)
        pts = a[None, :] + ts[:, None] * (b - a)[None, :]
        idx = np.floor((pts - grid.origin) / grid.resolution).astype(int)
        dims = np.asarray(grid.states.shape)
        if np.any(idx < 0) or np.any(idx >= dims):
            return False
        states = grid.states[idx[:, 0], idx[:, 1], idx[:, 2]]
        if np.any(states != FREE):
            return False
        return bool(np.all(field.nearest_distances(pts) > params.r_min))

    if grid.state_at(start) != FREE or field.nearest_distance(start) <= params.r_min:
        return None
    if grid.state_at(goal) != FREE or field.nearest_distance(goal) <= params.r_min:
        return None
    if float(np.linalg.norm(goal - start)) <= step and segment_valid(start, goal):
        waypoints = np.vstack([start, goal])
        clearances = np.array([field.nearest_distance(start), field.nearest_distance(goal)])
        length, risk = _chain_cost(waypoints, clearances, params)
        return PlanResult(waypoints, clearances, length, risk, "rrt-star",
                          planning_time=time.perf_counter() - t0)

    cap = 4096
    pos = np.empty((cap, 3))
    clear = np.empty(cap)
    cost = np.empty(cap)
    parent = np.empty(cap, dtype=np.int64)
    pos[0] = start
    clear[0] = field.nearest_distance(start)
    cost[0] = 0.0
    parent[0] = -1
    n = 1
    lo, hi = grid.world_min(), grid.world_max()
    iters = 0
    deadline = t0 + timeout

    def edge_cost(i, q, cq):
        dl = float(np.linalg.norm(pos[i] - q))
        m = max(0.0, params.d_max - (clear[i] + cq) / 2.0)
        return dl + params.xi * m * m * dl

    while True:
        iters += 1
        if max_iters is not None and iters > max_iters:
            return None
        if iters % 32 == 0 and time.perf_counter() > deadline:
            return None
        q = goal if rng.random() < goal_bias else rng.uniform(lo, hi)
        d2 = np.einsum("ij,ij->i", pos[:n] - q, pos[:n] - q)
        j = int(np.argmin(d2))
        dist = math.sqrt(float(d2[j]))
        if dist < 1e-9:
            continue
        q_new = pos[j] + (q - pos[j]) * (min(step, dist) / dist)
        cq = field.nearest_distance(q_new)
        if cq <= params.r_min:
            continue
        d2n = np.einsum("ij,ij->i", pos[:n] - q_new, pos[:n] - q_new)
        near = np.flatnonzero(d2n <= rewire_radius * rewire_radius)
        if j not in near:
            near = np.append(near, j)
        best_parent = -1
        best_cost = math.inf
        for k in near:
            c = cost[k] + edge_cost(int(k), q_new, cq)
            if c < best_cost and segment_valid(pos[k], q_new):
                best_parent, best_cost = int(k), c
        if best_parent < 0:
            continue
        if n == cap:
            cap *= 2
            pos = np.vstack([pos, np.empty((n, 3))])
            clear = np.concatenate([clear, np.empty(n)])
            cost = np.concatenate([cost, np.empty(n)])
            parent = np.concatenate([parent, np.empty(n, dtype=np.int64)])
        pos[n], clear[n], cost[n], parent[n] = q_new, cq, best_cost, best_parent
        new_id = n
        n += 1
        for k in near:
            if k == best_parent:
                continue
            alt = best_cost + edge_cost(new_id, pos[k], clear[k])
            if alt < cost[k] and segment_valid(q_new, pos[k]):
                parent[k] = new_id
                cost[k] = alt
        if float(np.linalg.norm(q_new - goal)) <= step and segment_valid(q_new, goal):
            ids = [new_id]
            while parent[ids[-1]] >= 0:
                ids.append(int(parent[ids[-1]]))
            ids.reverse()
            waypoints = np.vstack([pos[ids], goal])
            clearances = np.concatenate([clear[ids], [field.nearest_distance(goal)]])
            length, risk = _chain_cost(waypoints, clearances, params)
            return PlanResult(waypoints, clearances, length, risk, "rrt-star",
                              planning_time=time.perf_counter() - t0)
