"""Incremental two-layer sphere map.

The dense layer is an undirected graph of free-space spheres (center, radius =
nearest-obstacle distance); two spheres are connected when their intersection
circle radius exceeds ``r_min``. The sparse layer partitions the nodes into
roughly convex segments joined by portals, with optimal portal-to-portal paths
cached per segment.

One ``update_iteration`` mutates only the cube around the vehicle, in three
steps: radius recomputation + pruning, expansion by sampling, then
segmentation (split / grow / seed / merge / portal + cache refresh). The map
has a single mutator; planning runs between iterations or on a snapshot.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry, planner
from .spatial import NodeIndex, ObstacleIndex
from .voxelgrid import (FREE, OccupancyGrid, UpdateCube, frontier_points,
                        obstacle_points, raycast_free)


@dataclass
class BuildParams:
    """Knobs of the map-growing iteration.

    ``r_cap`` bounds sphere radii and doubles as the margin by which the
    obstacle-extraction cube is padded, so a radius computed from the local
    obstacle set is either exact or capped, never optimistic. ``xi`` and
    ``d_max`` are the risk weights baked into cached portal paths.
    """

    r_min: float = 0.8
    cube_side: float = 60.0
    r_exp: float = 5.0
    r_merge: float = 20.0
    kappa: float = 0.9
    per_voxel_samples: bool = True
    voxel_stride: int = 1
    ray_count: int = 64
    samples_per_ray: int = 8
    eps_r: float = 1e-6
    r_cap: float = 8.0
    frontier_connectivity: int = 6
    xi: float = 7.0
    d_max: float = 2.0

    def __post_init__(self):
        if self.r_min <= 0:
            raise ValueError("r_min must be positive")
        if self.cube_side <= 0:
            raise ValueError("cube_side must be positive")
        if not self.r_exp < self.r_merge:
            raise ValueError("r_exp must be smaller than r_merge")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must be in (0, 1]")
        if self.voxel_stride < 1:
            raise ValueError("voxel_stride must be >= 1")
        if self.r_cap <= self.r_min:
            raise ValueError("r_cap must exceed r_min")
        if self.samples_per_ray < 1 or self.ray_count < 0:
            raise ValueError("bad ray sampling configuration")

    def planner_params(self) -> "planner.PlannerParams":
        return planner.PlannerParams(xi=self.xi, d_max=self.d_max, r_min=self.r_min)


@dataclass
class SphereNode:
    id: int
    p: np.ndarray
    r: float
    segment: int | None = None


@dataclass
class Segment:
    """Connected, roughly convex cluster of nodes with cached portal paths."""

    label: int
    members: set[int]
    center: np.ndarray
    radius: float
    path_cache: dict[tuple[int, int], tuple[tuple[int, ...], float]] = field(default_factory=dict)
    altered: bool = True
    box_dirty: bool = True
    cached_box: tuple | None = None


@dataclass
class Portal:
    """Best inter-segment edge: node ``a`` lives in the lower-labeled segment."""

    segments: tuple[int, int]
    a: int
    b: int
    radius: float


@dataclass
class IterationReport:
    timings: dict[str, float]
    nodes_added: int = 0
    nodes_removed: int = 0
    edge_delta: int = 0
    segment_delta: int = 0
    node_count: int = 0
    edge_count: int = 0
    segment_count: int = 0

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())


class SphereMap:
    """Mutable sphere map; see the module docstring for the layer semantics."""

    def __init__(self, params: BuildParams | None = None, seed: int = 0):
        self.params = params if params is not None else BuildParams()
        self.plan_params = self.params.planner_params()
        self.nodes: dict[int, SphereNode] = {}
        self.adj: dict[int, set[int]] = {}
        self.node_index = NodeIndex(cell_size=max(2.0, self.params.r_cap / 2.0))
        self.segments: dict[int, Segment] = {}
        self.portals: dict[tuple[int, int], Portal] = {}
        self.frontiers = np.empty((0, 3))
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.last_cube: UpdateCube | None = None
        self.mutation_token = 0
        self._next_node_id = 0
        self._next_label = 0
        self._r_max = 0.0
        self._r_max_dirty = False

    # ------------------------------------------------------------------
    # graph layer
    # ------------------------------------------------------------------

    def node_count(self) -> int:
        return len(self.nodes)

    def edge_count(self) -> int:
        return sum(len(s) for s in self.adj.values()) // 2

    def edges(self):
        for a, nbrs in self.adj.items():
            for b in nbrs:
                if a < b:
                    yield a, b

    def _radius_bound(self) -> float:
        """Upper bound on any live node radius."""
        if self._r_max_dirty:
            self._r_max = max((n.r for n in self.nodes.values()), default=0.0)
            self._r_max_dirty = False
        return self._r_max

    def _add_node(self, p, r: float) -> int:
        nid = self._next_node_id
        self._next_node_id += 1
        # Coordinates and radii are quantized to float32 so SMAP snapshots
        # round-trip the structure exactly.
        p = np.asarray(np.asarray(p, dtype=np.float32), dtype=float)
        r = float(np.float32(r))
        self.nodes[nid] = SphereNode(nid, p, r)
        self.adj[nid] = set()
        self.node_index.insert(nid, p, aux=r)
        if r > self._r_max:
            self._r_max = r
        self.mutation_token += 1
        return nid

    def _mark_altered(self, nid: int, geometry_changed: bool = False) -> None:
        label = self.nodes[nid].segment
        if label is not None:
            seg = self.segments[label]
            seg.altered = True
            if geometry_changed:
                seg.box_dirty = True

    def _remove_node(self, nid: int) -> None:
        node = self.nodes.pop(nid)
        for nb in self.adj.pop(nid):
            self.adj[nb].discard(nid)
            self._mark_altered(nb)
        self.node_index.remove(nid)
        if node.r >= self._r_max and not self._r_max_dirty:
            self._r_max_dirty = True
        if node.segment is not None:
            seg = self.segments[node.segment]
            seg.members.discard(nid)
            seg.altered = True
            seg.box_dirty = True
            if not seg.members:
                self._drop_segment(node.segment)
        self.mutation_token += 1

    def _set_radius(self, nid: int, r: float) -> None:
        node = self.nodes[nid]
        if node.r >= self._r_max and r < node.r:
            self._r_max_dirty = True
        node.r = r
        if r > self._r_max:
            self._r_max = r
        self.node_index.set_aux(nid, r)
        self._mark_altered(nid, geometry_changed=True)
        self.mutation_token += 1

    def _recompute_edges(self, nid: int) -> None:
        """Re-derive this node's adjacency from the intersection rule."""
        node = self.nodes[nid]
        ids, pos, aux, d = self.node_index.query(node.p, node.r + self._radius_bound())
        new_nbrs: set[int] = set()
        if len(ids):
            ir = geometry.intersection_radii(d, node.r, aux)
            keep = (ir > self.params.r_min) & (ids != nid)
            new_nbrs = {int(i) for i in ids[keep]}
        old = self.adj[nid]
        for nb in new_nbrs - old:
            self.adj[nb].add(nid)
            self._mark_altered(nb)
        for nb in old - new_nbrs:
            self.adj[nb].discard(nid)
            self._mark_altered(nb)
        if new_nbrs != old:
            self.adj[nid] = new_nbrs
            self._mark_altered(nid)
            self.mutation_token += 1

    def _is_redundant_point(self, p: np.ndarray, r: float, exclude: int = -1,
                            strict: bool = True) -> bool:
        """True iff a larger sphere covers >= kappa of this one's volume.

        ``strict`` demands a strictly larger coverer; the candidate sieve in
        expansion relaxes this to equal-or-larger so resampling the same spot
        converges instead of stacking twins. A coverer at useful kappa must
        contain the center, so its own center lies within the live radius
        bound of ``p``.
        """
        bound = self._radius_bound()
        if bound < r or (strict and bound <= r):
            return False
        query_r = bound if self.params.kappa >= 0.5 else r + bound
        ids, pos, aux, d = self.node_index.query(p, query_r)
        if not len(ids):
            return False
        bigger = ((aux > r) if strict else (aux >= r)) & (ids != exclude)
        if not bigger.any():
            return False
        frac = geometry.covered_fractions(r, d[bigger], aux[bigger])
        return bool(np.any(frac >= self.params.kappa))

    def is_redundant(self, nid: int) -> bool:
        node = self.nodes[nid]
        return self._is_redundant_point(node.p, node.r, exclude=nid)

    def nodes_in_cube(self, cube: UpdateCube) -> list[int]:
        reach = cube.side / 2.0 * math.sqrt(3.0) + 1e-9
        ids, pos, _, _ = self.node_index.query(cube.center, reach)
        if not len(ids):
            return []
        inside = np.all(np.abs(pos - cube.center) <= cube.side / 2.0, axis=1)
        return [int(i) for i in ids[inside]]

    # ------------------------------------------------------------------
    # step 1: radius update and pruning
    # ------------------------------------------------------------------

    def recompute_and_prune(self, index: ObstacleIndex, cube: UpdateCube) -> dict:
        stats = {"removed_unsafe": 0, "removed_redundant": 0, "radius_changed": 0}
        ids = sorted(self.nodes_in_cube(cube))
        if not ids:
            return stats
        pos = np.array([self.nodes[i].p for i in ids])
        dists = np.minimum(index.nearest_distances(pos), self.params.r_cap)
        changed = []
        for nid, dist in zip(ids, dists):
            r_new = float(np.float32(dist))
            if r_new < self.params.r_min:
                self._remove_node(nid)
                stats["removed_unsafe"] += 1
            elif r_new != self.nodes[nid].r:
                self._set_radius(nid, r_new)
                changed.append(nid)
        for nid in changed:
            self._recompute_edges(nid)
        stats["radius_changed"] = len(changed)
        # With no geometry change over the same cube, last iteration's sweep
        # still guarantees redundancy-freeness.
        same_cube = (self.last_cube is not None
                     and np.array_equal(self.last_cube.center, cube.center)
                     and self.last_cube.side == cube.side)
        if changed or stats["removed_unsafe"] or not same_cube:
            stats["removed_redundant"] = self._prune_redundant(
                [i for i in ids if i in self.nodes])
        return stats

    def _find_coverers(self, pts: np.ndarray, radii: np.ndarray,
                       strict: bool, exclude_ids=None) -> np.ndarray:
        """For each query sphere, an id of one covering node (-1 if none).

        A vectorized sweep against all nodes near the query bounding box; the
        caller re-verifies liveness, so a recorded coverer is only a witness.
        """
        out = np.full(len(pts), -1, dtype=np.int64)
        if not len(pts) or not self.nodes:
            return out
        bound = self._radius_bound()
        kappa = self.params.kappa
        # Chunks of the candidate scan are spatially coherent, so each chunk
        # only needs the nodes around its own bounding box.
        for s in range(0, len(pts), 512):
            e = min(s + 512, len(pts))
            lo, hi = pts[s:e].min(axis=0), pts[s:e].max(axis=0)
            center = (lo + hi) / 2.0
            reach = float(np.linalg.norm(hi - lo)) / 2.0 + bound + float(radii[s:e].max())
            ids, pos, aux, _ = self.node_index.query(center, reach)
            if not len(ids):
                continue
            delta = pts[s:e, None, :] - pos[None, :, :]
            d = np.sqrt(np.einsum("ijk,ijk->ij", delta, delta))
            frac = geometry.coverage_matrix(radii[s:e], d, aux)
            bigger = (aux[None, :] > radii[s:e, None]) if strict \
                else (aux[None, :] >= radii[s:e, None])
            ok = (frac >= kappa) & bigger
            if exclude_ids is not None:
                ok &= ids[None, :] != np.asarray(exclude_ids[s:e])[:, None]
            hit = ok.any(axis=1)
            out[s:e][hit] = ids[ok.argmax(axis=1)[hit]]
        return out

    def _prune_redundant(self, ids) -> int:
        """Remove redundant nodes in ascending-radius order, re-evaluating as we go.

        A batch pass records a covering witness per node; since pruning only
        removes nodes, a node without an initial witness can never become
        redundant, and a node whose witness is still alive still is.
        """
        ids = sorted((i for i in ids if i in self.nodes),
                     key=lambda i: (self.nodes[i].r, i))
        if not ids:
            return 0
        pts = np.array([self.nodes[i].p for i in ids])
        radii = np.array([self.nodes[i].r for i in ids])
        witness = self._find_coverers(pts, radii, strict=True,
                                      exclude_ids=np.array(ids, dtype=np.int64))
        removed = 0
        for nid, wit in zip(ids, witness):
            if wit < 0 or nid not in self.nodes:
                continue
            if int(wit) in self.nodes or self.is_redundant(nid):
                self._remove_node(nid)
                removed += 1
        return removed

    # ------------------------------------------------------------------
    # step 2: expansion
    # ------------------------------------------------------------------

    def _sample_candidates(self, grid: OccupancyGrid, cube: UpdateCube, uav) -> np.ndarray:
        parts = []
        p = self.params
        if p.per_voxel_samples:
            rng = cube.voxel_range(grid)
            if rng is not None:
                (i0, j0, k0), (i1, j1, k1) = rng
                st = p.voxel_stride
                sub = grid.states[i0:i1:st, j0:j1:st, k0:k1:st]
                idx = np.argwhere(sub == FREE)
                if len(idx):
                    idx = idx * st + (i0, j0, k0)
                    parts.append(grid.origin + grid.resolution * (idx + 0.5))
        if p.ray_count > 0:
            # Directions are always drawn so the RNG stream only depends on
            # the iteration sequence, not on what the rays hit.
            dirs = self.rng.normal(size=(p.ray_count, 3))
            norms = np.linalg.norm(dirs, axis=1)
            norms[norms < 1e-12] = 1.0
            dirs /= norms[:, None]
            uav = np.asarray(uav, dtype=float)
            steps = np.arange(1, p.samples_per_ray + 1) * (cube.side / 2.0 / p.samples_per_ray)
            pts = uav[None, None, :] + dirs[:, None, :] * steps[None, :, None]
            idx = np.floor((pts - grid.origin) / grid.resolution).astype(int)
            dims = np.asarray(grid.states.shape)
            inb = np.all((idx >= 0) & (idx < dims), axis=2)
            safe = np.clip(idx, 0, dims - 1)
            states = grid.states[safe[..., 0], safe[..., 1], safe[..., 2]]
            blocked = (~inb) | (states != FREE)
            stop = np.where(blocked.any(axis=1), blocked.argmax(axis=1), p.samples_per_ray)
            keep = np.arange(p.samples_per_ray)[None, :] < stop[:, None]
            if keep.any():
                parts.append(pts[keep])
        if not parts:
            return np.empty((0, 3))
        return np.concatenate(parts, axis=0)

    def expand(self, index: ObstacleIndex, grid: OccupancyGrid, cube: UpdateCube, uav) -> dict:
        stats = {"candidates": 0, "added": 0, "removed_redundant": 0}
        cands = self._sample_candidates(grid, cube, uav)
        stats["candidates"] = len(cands)
        if not len(cands):
            return stats
        cands = np.asarray(np.asarray(cands, dtype=np.float32), dtype=float)
        radii = np.minimum(index.nearest_distances(cands), self.params.r_cap)
        radii = np.asarray(np.asarray(radii, dtype=np.float32), dtype=float)
        kappa = self.params.kappa
        order = radii >= self.params.r_min
        cands, radii = cands[order], radii[order]
        # A live node at the exact candidate position with the same (fresh)
        # radius fully covers it; this catches nearly every lattice candidate
        # once the cube has converged.
        twin_r = {node.p.tobytes(): node.r for node in self.nodes.values()}
        fresh = np.array([twin_r.get(p.tobytes(), -1.0) < r
                          for p, r in zip(cands, radii)])
        witness = np.full(len(cands), -1, dtype=np.int64)
        if fresh.any():
            witness[fresh] = self._find_coverers(cands[fresh], radii[fresh], strict=False)
        added_ids = []
        for p, r, wit, is_fresh in zip(cands, radii, witness, fresh):
            if not is_fresh:
                continue
            r = float(r)
            if wit >= 0 and int(wit) in self.nodes:
                continue
            if self._is_redundant_point(p, r, strict=False):
                continue
            nid = self._add_node(p, r)
            added_ids.append(nid)
            self._recompute_edges(nid)
            # Only the fresh sphere can have made a surviving neighbor
            # redundant, so a pairwise coverage check suffices.
            node = self.nodes[nid]
            for nb in sorted(self.adj[nid]):
                other = self.nodes[nb]
                if other.r >= node.r:
                    continue
                d = float(np.linalg.norm(other.p - node.p))
                frac = geometry.covered_fractions(other.r, np.array([d]), np.array([node.r]))
                if frac[0] >= kappa:
                    self._remove_node(nb)
                    stats["removed_redundant"] += 1
            stats["added"] += 1
        # New spheres are the only fresh coverage sources, and a coverer must
        # contain the covered center: sweeping nodes inside added spheres
        # restores cube-wide redundancy-freeness.
        if added_ids:
            suspects: set[int] = set()
            for nid in added_ids:
                if nid not in self.nodes:
                    continue
                node = self.nodes[nid]
                ids, _, _, _ = self.node_index.query(node.p, node.r)
                suspects.update(int(i) for i in ids)
            stats["removed_redundant"] += self._prune_redundant(
                [i for i in suspects if i in self.nodes])
        return stats

    # ------------------------------------------------------------------
    # step 3: segmentation
    # ------------------------------------------------------------------

    def _new_label(self) -> int:
        label = self._next_label
        self._next_label += 1
        return label

    def _drop_segment(self, label: int) -> None:
        del self.segments[label]
        for pair in [p for p in self.portals if label in p]:
            other = pair[0] if pair[1] == label else pair[1]
            del self.portals[pair]
            if other in self.segments:
                self.segments[other].altered = True

    def _refresh_bounds(self, label: int) -> None:
        seg = self.segments[label]
        ids = sorted(seg.members)
        pos = np.array([self.nodes[i].p for i in ids])
        rad = np.array([self.nodes[i].r for i in ids])
        seg.center, seg.radius = geometry.enclosing_sphere(pos, rad)

    def _components(self, members: set[int]) -> list[set[int]]:
        out = []
        todo = set(members)
        while todo:
            seed = min(todo)
            comp = {seed}
            stack = [seed]
            while stack:
                cur = stack.pop()
                for nb in self.adj[cur]:
                    if nb in todo and nb not in comp:
                        comp.add(nb)
                        stack.append(nb)
            todo -= comp
            out.append(comp)
        return out

    def _split_disconnected(self, labels) -> list[int]:
        created = []
        for label in sorted(labels):
            seg = self.segments.get(label)
            if seg is None:
                continue
            comps = self._components(seg.members)
            if len(comps) <= 1:
                continue
            comps.sort(key=lambda c: (-len(c), min(c)))
            seg.members = comps[0]
            seg.altered = True
            seg.box_dirty = True
            for comp in comps[1:]:
                new = self._new_label()
                self.segments[new] = Segment(new, comp, np.zeros(3), 0.0)
                for nid in comp:
                    self.nodes[nid].segment = new
                created.append(new)
            self._refresh_bounds(label)
        for label in created:
            self._refresh_bounds(label)
        return created

    def _grow_segment(self, label: int) -> None:
        """Flood-fill unassigned nodes, keeping the bounding sphere within r_exp.

        The bound is maintained incrementally (Ritter growth step per accepted
        node), so each candidate test is O(1).
        """
        import heapq

        seg = self.segments[label]
        center = np.asarray(seg.center, dtype=float)
        radius = float(seg.radius)
        heap: list[tuple[float, int]] = []
        queued: set[int] = set()

        def offer(nid: int) -> None:
            if nid in queued or self.nodes[nid].segment is not None:
                return
            queued.add(nid)
            d = float(np.linalg.norm(self.nodes[nid].p - center))
            heapq.heappush(heap, (d, nid))

        for mid in sorted(seg.members):
            for nb in sorted(self.adj[mid]):
                offer(nb)
        while heap:
            _, nid = heapq.heappop(heap)
            if nid not in self.nodes or self.nodes[nid].segment is not None:
                continue
            node = self.nodes[nid]
            gap = node.p - center
            dist = float(np.linalg.norm(gap))
            reach = dist + node.r
            if reach > radius:
                new_radius = (radius + reach) / 2.0
                if new_radius > self.params.r_exp:
                    continue
                if dist > 1e-12:
                    new_center = center + gap * ((reach - new_radius) / dist)
                else:
                    new_center = center
                center, radius = new_center, new_radius
            seg.members.add(nid)
            node.segment = label
            seg.altered = True
            seg.box_dirty = True
            for nb in sorted(self.adj[nid]):
                offer(nb)
        seg.center, seg.radius = center, radius

    def _adjacent_labels(self, label: int) -> set[int]:
        out = set()
        for nid in self.segments[label].members:
            for nb in self.adj[nid]:
                other = self.nodes[nb].segment
                if other is not None and other != label:
                    out.add(other)
        return out

    def _can_merge(self, a: int, b: int, grid: OccupancyGrid):
        ids = sorted(self.segments[a].members) + sorted(self.segments[b].members)
        pos = np.array([self.nodes[i].p for i in ids])
        rad = np.array([self.nodes[i].r for i in ids])
        center, radius = geometry.enclosing_sphere(pos, rad)
        if radius > self.params.r_merge:
            return None
        if not raycast_free(grid, self.segments[a].center, self.segments[b].center):
            return None
        return center, radius

    def _merge(self, target: int, source: int, bounds) -> None:
        seg_t, seg_s = self.segments[target], self.segments[source]
        for nid in seg_s.members:
            self.nodes[nid].segment = target
        seg_t.members |= seg_s.members
        seg_t.center, seg_t.radius = bounds
        seg_t.altered = True
        seg_t.box_dirty = True
        self._drop_segment(source)

    def _recompute_portals(self, label: int, cache_dirty: set[int]) -> None:
        seg = self.segments[label]
        best: dict[int, tuple[float, int, int]] = {}
        for nid in sorted(seg.members):
            node = self.nodes[nid]
            for nb in sorted(self.adj[nid]):
                other = self.nodes[nb].segment
                if other is None or other == label:
                    continue
                onode = self.nodes[nb]
                ir = geometry.intersection_radius(node.p, node.r, onode.p, onode.r)
                cur = best.get(other)
                if cur is None or ir > cur[0] or (ir == cur[0] and (nid, nb) < (cur[1], cur[2])):
                    best[other] = (ir, nid, nb)
        stale = [pair for pair in self.portals if label in pair]
        for pair in stale:
            other = pair[0] if pair[1] == label else pair[1]
            if other not in best:
                del self.portals[pair]
                cache_dirty.add(other)
        for other, (ir, nid, nb) in best.items():
            pair = (label, other) if label < other else (other, label)
            a, b = (nid, nb) if label < other else (nb, nid)
            new = Portal(pair, a, b, ir)
            old = self.portals.get(pair)
            if old is None or (old.a, old.b) != (a, b) or old.radius != ir:
                self.portals[pair] = new
                cache_dirty.add(other)
                cache_dirty.add(label)

    def segment_portal_nodes(self, label: int) -> list[int]:
        """Node ids of this segment's portal endpoints, sorted."""
        out = set()
        for pair, portal in self.portals.items():
            if pair[0] == label:
                out.add(portal.a)
            elif pair[1] == label:
                out.add(portal.b)
        return sorted(out)

    def _rebuild_cache(self, label: int) -> None:
        seg = self.segments[label]
        seg.path_cache = {}
        endpoints = self.segment_portal_nodes(label)
        for i, a in enumerate(endpoints):
            for b in endpoints[i + 1:]:
                path, cost = planner.astar_nodes(self, a, b, self.plan_params, restrict=label)
                seg.path_cache[(a, b)] = (tuple(path), cost)
        seg.altered = False

    def segment_update(self, grid: OccupancyGrid, cube: UpdateCube) -> dict:
        stats = {"split": 0, "created": 0, "merged": 0, "caches_rebuilt": 0}
        cube_labels = {self.nodes[i].segment for i in self.nodes_in_cube(cube)}
        cube_labels.discard(None)
        near = set(cube_labels) | {l for l, s in self.segments.items() if s.altered}

        created = self._split_disconnected(near)
        stats["split"] = len(created)
        near |= set(created)

        # Grow existing segments over unassigned nodes, then seed new ones.
        for label in sorted(near):
            if label in self.segments:
                self._grow_segment(label)
        unassigned = [i for i in self.nodes_in_cube(cube) if self.nodes[i].segment is None]
        for nid in sorted(unassigned, key=lambda i: (-self.nodes[i].r, i)):
            if self.nodes[nid].segment is not None:
                continue
            label = self._new_label()
            node = self.nodes[nid]
            self.segments[label] = Segment(label, {nid}, node.p.copy(), node.r)
            node.segment = label
            self._grow_segment(label)
            near.add(label)
            stats["created"] += 1

        # Merge attempt over adjacent pairs touching the near set.
        merged_into: dict[int, int] = {}

        def resolve(lbl: int) -> int:
            while lbl in merged_into:
                lbl = merged_into[lbl]
            return lbl

        pairs = set()
        for label in sorted(near):
            if label not in self.segments:
                continue
            for other in self._adjacent_labels(label):
                pairs.add((min(label, other), max(label, other)))
        for s1, s2 in sorted(pairs):
            a, b = resolve(s1), resolve(s2)
            if a == b or a not in self.segments or b not in self.segments:
                continue
            bounds = self._can_merge(a, b, grid)
            if bounds is None:
                continue
            target, source = min(a, b), max(a, b)
            self._merge(target, source, bounds)
            merged_into[source] = target
            stats["merged"] += 1

        # Portals for every altered segment, then path caches.
        dirty = sorted(l for l, s in self.segments.items() if s.altered)
        cache_dirty: set[int] = set(dirty)
        for label in dirty:
            self._recompute_portals(label, cache_dirty)
        for label in sorted(cache_dirty):
            if label in self.segments:
                self._rebuild_cache(label)
                stats["caches_rebuilt"] += 1
        self.mutation_token += 1
        return stats

    # ------------------------------------------------------------------
    # orchestration
    # ------------------------------------------------------------------

    def _update_frontier_store(self, cube: UpdateCube, fresh: np.ndarray) -> None:
        if len(self.frontiers):
            rel = np.abs(self.frontiers - cube.center)
            outside = np.any(rel > cube.side / 2.0, axis=1)
            kept = self.frontiers[outside]
        else:
            kept = self.frontiers
        self.frontiers = np.concatenate([kept, fresh.reshape(-1, 3)], axis=0)

    def update_iteration(self, grid: OccupancyGrid, uav) -> IterationReport:
        """Run extraction + the three update steps on the cube centered on the UAV."""
        timings: dict[str, float] = {}
        report = IterationReport(timings)
        cube = UpdateCube(np.asarray(uav, dtype=float), self.params.cube_side)
        padded = cube.padded(self.params.r_cap)
        if padded.voxel_range(grid) is None:
            report.node_count = self.node_count()
            report.edge_count = self.edge_count()
            report.segment_count = len(self.segments)
            return report

        n0, e0, s0 = self.node_count(), self.edge_count(), len(self.segments)
        t = time.perf_counter()
        obstacles = obstacle_points(grid, padded)
        frontiers = frontier_points(grid, padded, self.params.frontier_connectivity)
        index = ObstacleIndex.build(obstacles, frontiers)
        self._update_frontier_store(padded, frontiers)
        timings["extract"] = time.perf_counter() - t

        t = time.perf_counter()
        prune_stats = self.recompute_and_prune(index, cube)
        timings["prune"] = time.perf_counter() - t

        t = time.perf_counter()
        expand_stats = self.expand(index, grid, cube, uav)
        timings["expand"] = time.perf_counter() - t

        t = time.perf_counter()
        self.segment_update(grid, cube)
        timings["segment"] = time.perf_counter() - t

        self.last_cube = cube
        report.nodes_added = expand_stats["added"]
        report.nodes_removed = (prune_stats["removed_unsafe"]
                                + prune_stats["removed_redundant"]
                                + expand_stats["removed_redundant"])
        report.node_count = self.node_count()
        report.edge_count = self.edge_count()
        report.segment_count = len(self.segments)
        report.edge_delta = report.edge_count - e0
        report.segment_delta = report.segment_count - s0
        return report

    def snapshot(self) -> "SphereMap":
        """Deep copy safe to plan against while the original keeps updating."""
        import copy

        return copy.deepcopy(self)
