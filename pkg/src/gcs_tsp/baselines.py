"""Comparison methods without optimality certificates: ECG and Greedy."""

from __future__ import annotations

import math
import time

import numpy as np

from .conic import TrajectoryCache, chebyshev_center
from .ghost import HEURISTIC, TIME_LIMIT, SearchNode, Solution, _lawler_murty, _Run, _stats
from .lbg import LowerBoundGraph, build_lbg
from .model import GcsInstance
from .rtsp import CutPool, EdgeRtsp, canonical_tour

# trajectories evaluated per tour when unfolding is only guided, not bounded
ECG_PATHS_PER_TOUR = 20


def center_distances(instance: GcsInstance) -> np.ndarray:
    """Euclidean distances between Chebyshev centers, restricted to closure coordinates.

    Defined for every ordered pair joined by some GCS path (abstract tours
    may skip over vertices); +inf otherwise.
    """
    centers = []
    for v in instance.vlist:
        c, _ = chebyshev_center(v.set)
        mask = list(v.closure_mask) or list(range(v.dim))
        centers.append(np.asarray(c, float)[mask])
    n = instance.n
    reach = np.eye(n, dtype=bool)
    for u, v in instance.edge_at:
        reach[u, v] = True
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    dist = np.full((n, n), np.inf)
    for u in range(n):
        for v in range(n):
            if u != v and reach[u, v]:
                a, b = centers[u], centers[v]
                dist[u, v] = float(np.linalg.norm(a - b)) if a.shape == b.shape else 0.0
    return dist


class EdgeStepModel:
    """Unfolding guidance from per-edge center distances (not a lower bound)."""

    def __init__(self, instance: GcsInstance, dist: np.ndarray):
        self.instance = instance
        self.dist = dist
        sp = np.full_like(dist, np.inf)
        for u, v in instance.edge_at:
            sp[u, v] = dist[u, v]
        np.fill_diagonal(sp, 0.0)
        for k in range(instance.n):
            sp = np.minimum(sp, sp[:, [k]] + sp[[k], :])
        self.sp = sp

    def first_steps(self, v1):
        return [(u, float(self.dist[v1, u])) for u in self.instance.out_nbrs[v1]]

    def successors(self, a, b):
        return [(c, float(self.dist[b, c])) for c in self.instance.out_nbrs[b]]

    def closing_cost(self, a, v1, b):
        return 0.0

    def pair(self, u, v):
        return float(self.sp[u, v])

    def center_min(self, v):
        return 0.0

    def step_min(self, a, b):
        return 0.0


def _result(run: _Run, t0: float, expired: bool) -> Solution:
    stats = run.stats
    stats["wall_time_s"] = time.monotonic() - t0
    status = TIME_LIMIT if expired else HEURISTIC
    best = run.best
    if best is None:
        return Solution(status, math.inf, None, None, stats=stats)
    return Solution(status, best.cost, None, None, best.tour, best.path, list(best.traj), stats)


def solve_ecg(instance: GcsInstance, time_limit: float | None = 100.0, paths_per_tour: int = ECG_PATHS_PER_TOUR) -> Solution:
    """Tours ranked by center distances, realizations guided by the same distances."""
    t0 = time.monotonic()
    deadline = None if time_limit is None else t0 + time_limit
    stats = _stats()
    dist = center_distances(instance)
    run = _Run(instance, EdgeStepModel(instance, dist), TrajectoryCache(instance), 0.0, deadline, None, None, stats)
    run.prune = False
    run.max_paths = paths_per_tour
    if run.expired():
        return _result(run, t0, True)
    model = EdgeRtsp(instance.n, dist, CutPool())
    status, _ = _lawler_murty(run, model, certify=False, seen=None)
    stats["cuts"] = len(model.pool)
    return _result(run, t0, status == TIME_LIMIT)


def solve_greedy(instance: GcsInstance, time_limit: float | None = 100.0, lbg: LowerBoundGraph | None = None) -> Solution:
    """Depth-first visit orders, cheapest passage into the next vertex first, with backtracking."""
    t0 = time.monotonic()
    deadline = None if time_limit is None else t0 + time_limit
    stats = _stats()
    if time_limit is not None and time_limit <= 0:
        return _result(_Run(instance, None, None, 0.0, deadline, None, None, stats), t0, True)
    if lbg is None:
        lbg = build_lbg(instance)
        stats["lbg_solves"] = lbg.solves
    n = instance.n
    entry = {}
    for (a, u, v), val in lbg.lb.items():
        entry[(u, v)] = min(entry.get((u, v), math.inf), val)

    def rank(u, v):
        if (u, v) in entry:
            return (0, entry[(u, v)], v)
        return (1, lbg.pair(u, v), v)

    run = _Run(instance, lbg, TrajectoryCache(instance), 0.0, deadline, None, None, stats)
    run.use_prefix_bounds()
    seen: set[tuple[int, ...]] = set()
    expired = False

    def dfs(order: list[int]) -> bool:
        nonlocal expired
        if run.expired():
            expired = True
            return False
        u = order[-1]
        if len(order) == n:
            if not math.isfinite(lbg.pair(u, order[0])):
                return True
            tour = canonical_tour(order)
            if tour in seen:
                return True
            seen.add(tour)
            node = SearchNode(frozenset(), frozenset(), tour, 0.0, len(seen))
            if not run.evaluate(node):
                expired = True
                return False
            return True
        rest = [v for v in range(n) if v not in order and math.isfinite(lbg.pair(u, v))]
        for v in sorted(rest, key=lambda v: rank(u, v)):
            if not dfs(order + [v]):
                return False
        return True

    for start in range(n):
        if not dfs([start]):
            break
    return _result(run, t0, expired)
