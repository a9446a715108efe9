"""Independent reference implementations used to certify planner outputs.

Deliberately simple and separate from the package internals: uniform-cost
search with its own cost arithmetic, a random sphere-map generator, and
brute-force coverage oracles.
"""

import heapq
import math

import numpy as np
from scipy.spatial import cKDTree

from spheremap import FREE, BuildParams, SphereMap, UpdateCube
from spheremap.voxelgrid import frontier_points, obstacle_points


def free_centroids(grid):
    idx = np.argwhere(grid.states == FREE)
    return grid.origin + grid.resolution * (idx + 0.5)


def covered_mask(smap, centers):
    """Which of the given points lie inside at least one sphere."""
    covered = np.zeros(len(centers), dtype=bool)
    for node in smap.nodes.values():
        d2 = np.einsum("ij,ij->i", centers - node.p, centers - node.p)
        covered |= d2 <= node.r * node.r
    return covered


def coverable_mask(grid, centers, r_min, r_cap):
    """Geometric ceiling: points reachable by any valid sphere centered on a
    free voxel centroid (clearance >= r_min against occupied + frontier points)."""
    span = float(np.max(grid.world_max() - grid.world_min()))
    cube = UpdateCube(0.5 * (grid.world_min() + grid.world_max()),
                      span + 2 * grid.resolution)
    obstacles = np.concatenate([obstacle_points(grid, cube),
                                frontier_points(grid, cube)], axis=0)
    cand = free_centroids(grid)
    if len(obstacles):
        d, _ = cKDTree(obstacles).query(cand)
    else:
        d = np.full(len(cand), np.inf)
    keep = d >= r_min
    cand, reach = cand[keep], np.minimum(d[keep], r_cap)
    out = np.zeros(len(centers), dtype=bool)
    for s in range(0, len(centers), 512):
        e = min(s + 512, len(centers))
        delta = centers[s:e, None, :] - cand[None, :, :]
        dist2 = np.einsum("ijk,ijk->ij", delta, delta)
        out[s:e] = (dist2 < (reach[None, :]) ** 2).any(axis=1)
    return out


def random_sphere_map(seed, max_nodes=50, box=20.0):
    """Random valid sphere graph plus covered start/goal points."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, max_nodes + 1))
    params = BuildParams(r_cap=8.0, cube_side=2 * box)
    smap = SphereMap(params, seed=0)
    for _ in range(n):
        p = rng.uniform(0.0, box, 3)
        r = rng.uniform(1.0, 4.0)
        nid = smap._add_node(p, r)
        smap._recompute_edges(nid)
    ids = sorted(smap.nodes)
    a, b = rng.choice(ids, 2)
    na, nb = smap.nodes[int(a)], smap.nodes[int(b)]
    start = na.p + rng.uniform(-0.4, 0.4, 3) * na.r
    goal = nb.p + rng.uniform(-0.4, 0.4, 3) * nb.r
    return smap, start, goal


def _attach_oracle(smap, p):
    best = None
    best_margin = -math.inf
    for nid in sorted(smap.nodes):
        node = smap.nodes[nid]
        margin = node.r - float(np.linalg.norm(np.asarray(p) - node.p))
        if margin >= 0.0 and margin > best_margin:
            best, best_margin = nid, margin
    return best, best_margin


def _step(p1, r1, p2, r2, xi, d_max):
    dl = float(np.linalg.norm(np.asarray(p1, dtype=float) - np.asarray(p2, dtype=float)))
    m = d_max - (r1 + r2) / 2.0
    if m < 0.0:
        m = 0.0
    return dl, xi * m * m * dl


def ucs_optimal(smap, start, goal, params):
    """Uniform-cost search over the sphere graph (no heuristic).

    Returns (L, Z, J, node path) with the same attach and cost semantics as
    the planner, or None when unreachable.
    """
    s_id, s_margin = _attach_oracle(smap, start)
    g_id, g_margin = _attach_oracle(smap, goal)
    if s_id is None or g_id is None:
        return None
    if np.array_equal(np.asarray(start, dtype=float), np.asarray(goal, dtype=float)):
        return 0.0, 0.0, 0.0, []
    nodes = smap.nodes
    dl, dz = _step(start, s_margin, nodes[s_id].p, nodes[s_id].r, params.xi, params.d_max)
    dist = {s_id: dl + dz}
    came = {}
    heap = [(dist[s_id], s_id)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == g_id:
            break
        nu = nodes[u]
        for v in smap.adj[u]:
            if v in done:
                continue
            nv = nodes[v]
            dl, dz = _step(nu.p, nu.r, nv.p, nv.r, params.xi, params.d_max)
            alt = d + dl + dz
            if alt < dist.get(v, math.inf):
                dist[v] = alt
                came[v] = u
                heapq.heappush(heap, (alt, v))
    if g_id not in done:
        return None
    path = [g_id]
    while path[-1] != s_id:
        path.append(came[path[-1]])
    path.reverse()
    # decompose along the chosen path exactly as the planner reports it
    pts = [np.asarray(start, dtype=float)] + [nodes[i].p for i in path] + [np.asarray(goal, dtype=float)]
    cls = [s_margin] + [nodes[i].r for i in path] + [g_margin]
    length = 0.0
    risk = 0.0
    for i in range(len(pts) - 1):
        dl, dz = _step(pts[i], cls[i], pts[i + 1], cls[i + 1], params.xi, params.d_max)
        length += dl
        risk += dz
    return length, risk, length + risk, path
