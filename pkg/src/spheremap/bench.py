"""Benchmark scenarios: multi-goal and single-goal planner comparisons plus the
map-compression study. Emits CSV rows with a stable schema.

Timing policy (stated in every report): queries are timed individually; the
clearance fields of the grid baselines and the sphere-graph cost tables are
precomputed outside the timed region, and map build time is reported
separately by the mission/build stage.
"""

from __future__ import annotations

import csv
import time

import numpy as np

from . import ltv as ltv_mod
from .errors import BudgetExceededError
from .mission import MissionTrace, run_mission
from .planner import (ClearanceField, PlannerParams, _graph_costs,
                      astar_sphere_graph, evaluate_path, grid_astar,
                      plan_cached, rrt_star)
from .voxelgrid import OccupancyGrid, downsample

TIMING_NOTES = (
    "timing: per-query planner time only",
    "grid baselines: clearance field precomputed before timing",
    "sphere planners: map and cost tables prebuilt; build time reported by the build stage",
)

ALL_MODES = ("grid", "grid-length", "rrt-star", "full-graph", "cached")
MULTI_GOAL_FIELDS = ("mode", "total_time_ms", "found", "attempted", "mean_cost",
                     "min_clearance")
SINGLE_GOAL_FIELDS = ("mode", "time_ms", "length", "risk", "cost", "min_clearance")
COMPRESSION_FIELDS = ("iteration", "revealed_voxels", "ltv_bytes", "coarse_bytes",
                      "full_bytes")


def mission_trace_through(world: OccupancyGrid, start, goal, step: float = 3.0,
                          coarse_factor: int = 4, **reveal_kwargs) -> MissionTrace:
    """Waypoints along a coarse-grid shortest path from start to goal.

    Keeps consecutive waypoints connected through free space, as a real
    exploration trace would be.
    """
    from .errors import ConfigError

    coarse = downsample(world, coarse_factor)
    field = ClearanceField(coarse)
    params = PlannerParams(xi=0.0, d_max=0.8, r_min=0.8)
    res = grid_astar(coarse, start, goal, params, "length-only", field=field)
    if res is None:
        raise ConfigError("no traversable route for the mission trace")
    pts = [res.waypoints[0]]
    travelled = 0.0
    for a, b in zip(res.waypoints, res.waypoints[1:]):
        travelled += float(np.linalg.norm(b - a))
        if travelled >= step:
            pts.append(b)
            travelled = 0.0
    if not np.array_equal(pts[-1], res.waypoints[-1]):
        pts.append(res.waypoints[-1])
    return MissionTrace(np.asarray(pts), **reveal_kwargs)


def pick_start(smap) -> np.ndarray:
    """Deterministic start point: center of the widest sphere."""
    nid = max(smap.nodes, key=lambda i: (smap.nodes[i].r, -i))
    return smap.nodes[nid].p.copy()


def sample_goal_nodes(smap, n: int, seed: int = 0, margin: float = 0.5) -> list[np.ndarray]:
    """Goal points at sphere centers with clearance margin, spread over
    distinct segments where possible."""
    rng = np.random.default_rng(seed)
    by_seg: dict[int, list[int]] = {}
    for nid in sorted(smap.nodes):
        node = smap.nodes[nid]
        if node.segment is None or node.r <= smap.params.r_min + margin:
            continue
        by_seg.setdefault(node.segment, []).append(nid)
    labels = sorted(by_seg)
    rng.shuffle(labels)
    goals: list[np.ndarray] = []
    while len(goals) < n and labels:
        keep = []
        for label in labels:
            ids = by_seg[label]
            pick = ids.pop(int(rng.integers(len(ids))))
            goals.append(smap.nodes[pick].p.copy())
            if len(goals) >= n:
                break
            if ids:
                keep.append(label)
        labels = keep
    return goals[:n]


def _run_mode(mode, smap, coarse, coarse_field, start, goals, params,
              rrt_timeout, rrt_seed, budget):
    if mode in ("full-graph", "cached"):
        _graph_costs(smap, params)  # warm the cost table outside the timed region
    results = []
    times = []
    for gi, goal in enumerate(goals):
        t0 = time.perf_counter()
        try:
            if mode == "grid":
                res = grid_astar(coarse, start, goal, params, "safety",
                                 field=coarse_field, budget=budget)
            elif mode == "grid-length":
                res = grid_astar(coarse, start, goal, params, "length-only",
                                 field=coarse_field, budget=budget)
            elif mode == "rrt-star":
                res = rrt_star(coarse, start, goal, params, timeout=rrt_timeout,
                               seed=rrt_seed + gi, field=coarse_field)
            elif mode == "full-graph":
                res = astar_sphere_graph(smap, start, goal, params)
            elif mode == "cached":
                res = plan_cached(smap, start, goal, params)
            else:
                raise ValueError(f"unknown mode {mode!r}")
        except BudgetExceededError:
            res = None
        times.append(time.perf_counter() - t0)
        results.append(res)
    return results, times


def scenario_multi_goal(world: OccupancyGrid, smap, start, goals,
                        params: PlannerParams, grid_factor: int = 2,
                        rrt_timeout: float = 10.0, rrt_seed: int = 1,
                        modes=ALL_MODES, budget=None):
    """Per-planner totals over a shared goal set (multi-goal study schema)."""
    coarse = downsample(world, grid_factor)
    coarse_field = ClearanceField(coarse)
    fine_field = ClearanceField(world)
    rows = []
    all_results = {}
    all_times = {}
    for mode in modes:
        results, times = _run_mode(mode, smap, coarse, coarse_field, start, goals,
                                   params, rrt_timeout, rrt_seed, budget)
        found = [r for r in results if r is not None]
        evals = [evaluate_path(r.waypoints, fine_field, params) for r in found]
        rows.append({
            "mode": mode,
            "total_time_ms": round(sum(times) * 1e3, 3),
            "found": len(found),
            "attempted": len(goals),
            "mean_cost": round(float(np.mean([e[2] for e in evals])), 4) if evals else "",
            "min_clearance": round(min(e[3] for e in evals), 4) if evals else "",
        })
        all_results[mode] = results
        all_times[mode] = times
    return {"rows": rows, "results": all_results, "times": all_times,
            "fine_field": fine_field, "coarse": coarse, "coarse_field": coarse_field}


def scenario_single_goal(world: OccupancyGrid, smap, start, goal,
                         params: PlannerParams, grid_factor: int = 2,
                         rrt_timeout: float = 10.0, rrt_seed: int = 1,
                         modes=ALL_MODES, budget=None):
    """Per-planner time and evaluated length/risk/cost to one goal."""
    coarse = downsample(world, grid_factor)
    coarse_field = ClearanceField(coarse)
    fine_field = ClearanceField(world)
    rows = []
    all_results = {}
    for mode in modes:
        results, times = _run_mode(mode, smap, coarse, coarse_field, start, [goal],
                                   params, rrt_timeout, rrt_seed, budget)
        res = results[0]
        if res is None:
            rows.append({"mode": mode, "time_ms": round(times[0] * 1e3, 3),
                         "length": "", "risk": "", "cost": "", "min_clearance": ""})
        else:
            L, Z, J, mc = evaluate_path(res.waypoints, fine_field, params)
            rows.append({"mode": mode, "time_ms": round(times[0] * 1e3, 3),
                         "length": round(L, 4), "risk": round(Z, 4),
                         "cost": round(J, 4), "min_clearance": round(mc, 4)})
        all_results[mode] = res
    return {"rows": rows, "results": all_results, "fine_field": fine_field,
            "coarse": coarse, "coarse_field": coarse_field}


def scenario_compression(world: OccupancyGrid, trace: MissionTrace, build_params,
                         seed: int = 0, every: int = 2):
    """LTV vs full vs 1 m grid byte sizes sampled along a mission."""
    rows = []

    def sample(smap, working, iteration):
        sizes = ltv_mod.size_report(ltv_mod.extract(smap), working)
        rows.append({"iteration": iteration,
                     "revealed_voxels": int(np.count_nonzero(working.states)),
                     "ltv_bytes": sizes[0], "coarse_bytes": sizes[2],
                     "full_bytes": sizes[1]})

    result = run_mission(world, trace, build_params, seed=seed,
                         checkpoint=lambda s, w, i: sample(s, w, i + 1),
                         checkpoint_every=every)
    if not rows or rows[-1]["iteration"] != len(trace.waypoints):
        sample(result.smap, result.working, len(trace.waypoints))
    ltv = ltv_mod.extract(result.smap)
    return {"rows": rows, "mission": result, "ltv": ltv,
            "misclassified": ltv_mod.misclassified_fraction(ltv, result.working)}


def revalidate_paths(results: dict, clearance_source, r_min: float) -> tuple[int, int, float]:
    """(valid, total, worst clearance) of found paths against a brute-force source."""
    valid = 0
    total = 0
    worst = float("inf")
    for mode_results in results.values():
        seq = mode_results if isinstance(mode_results, list) else [mode_results]
        for res in seq:
            if res is None:
                continue
            total += 1
            _, _, _, mc = evaluate_path(res.waypoints, clearance_source,
                                        PlannerParams(r_min=r_min))
            worst = min(worst, mc)
            if mc > r_min:
                valid += 1
    return valid, total, worst


def write_csv(path, fieldnames, rows, notes=TIMING_NOTES) -> None:
    with open(path, "w", newline="") as fh:
        for note in notes:
            fh.write(f"# {note}\n")
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
