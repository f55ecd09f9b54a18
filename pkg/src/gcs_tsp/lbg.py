"""Lower-bound hypergraph over triplets (u, v, w) of adjacent edges."""

from __future__ import annotations

import csv
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conic import triplet_lower_bound
from .model import GcsInstance

INF = float("inf")
PAIR_SEARCH_BUDGET = 50_000


@dataclass
class LowerBoundGraph:
    n: int
    lb: dict[tuple[int, int, int], float]
    succ: dict[tuple[int, int], list[tuple[int, float]]]
    pred: dict[tuple[int, int], list[tuple[int, float]]]
    pair_lb: np.ndarray = field(repr=False)
    dropped: list[tuple[int, int, int]] = field(default_factory=list)
    solves: int = 0
    approximate_pairs: int = 0
    out: dict[int, list[int]] = field(default_factory=dict, repr=False)
    _center: dict[int, float] = field(default_factory=dict, repr=False)
    _walk_from: dict[int, dict[tuple[int, int], float]] = field(default_factory=dict, repr=False)
    _walk_to: dict[int, dict[tuple[int, int], float]] = field(default_factory=dict, repr=False)

    @property
    def triplets(self) -> list[tuple[int, int, int]]:
        return list(self.lb)

    # interface shared with other step-cost models used by path unfolding
    def first_steps(self, v1: int) -> list[tuple[int, float]]:
        return [(u, 0.0) for u in self.out.get(v1, ())]

    def successors(self, a: int, b: int) -> list[tuple[int, float]]:
        return self.succ.get((a, b), [])

    def closing_cost(self, a: int, v1: int, b: int) -> float | None:
        return self.lb.get((a, v1, b))

    def pair(self, u: int, v: int) -> float:
        return float(self.pair_lb[u, v])

    def center_min(self, v: int) -> float:
        """Cheapest passage centered at ``v`` (+inf if none)."""
        if not self._center:
            for (a, c, b), val in self.lb.items():
                self._center[c] = min(self._center.get(c, INF), val)
        return self._center.get(v, INF)

    def step_min(self, a: int, b: int) -> float:
        """Cheapest passage (a, b, .) (+inf if the edge is a dead end)."""
        return min((val for _, val in self.succ.get((a, b), ())), default=INF)

    # walk relaxations used by the abstract triplet costs
    def walk_from(self, u: int) -> dict[tuple[int, int], float]:
        """Min lb-sum of walks from ``u`` ending with edge (a, b), counting triplets centered strictly inside."""
        if u not in self._walk_from:
            dist: dict[tuple[int, int], float] = {}
            heap = [(0.0, (u, b)) for b in self.out.get(u, ())]
            while heap:
                d, st = heapq.heappop(heap)
                if st in dist:
                    continue
                dist[st] = d
                for c, val in self.succ.get(st, ()):
                    nxt = (st[1], c)
                    if nxt not in dist:
                        heapq.heappush(heap, (d + val, nxt))
            self._walk_from[u] = dist
        return self._walk_from[u]

    def walk_to(self, w: int) -> dict[tuple[int, int], float]:
        """Min lb-sum of walks starting with edge (a, b) and ending at ``w`` (triplets centered strictly inside)."""
        if w not in self._walk_to:
            dist: dict[tuple[int, int], float] = {}
            heap = [(0.0, (a, w)) for a, nbrs in self.out.items() if w in nbrs]
            while heap:
                d, st = heapq.heappop(heap)
                if st in dist:
                    continue
                dist[st] = d
                for a, val in self.pred.get(st, ()):
                    prv = (a, st[0])
                    if prv not in dist:
                        heapq.heappush(heap, (d + val, prv))
            self._walk_to[w] = dist
        return self._walk_to[w]

    def to_csv(self, triplet_path, pair_path=None) -> None:
        with open(triplet_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["u", "v", "w", "lb"])
            for (u, v, w), val in sorted(self.lb.items()):
                wr.writerow([u, v, w, repr(val)])
        if pair_path is not None:
            np.savetxt(pair_path, self.pair_lb, delimiter=",")


def build_lbg(instance: GcsInstance, exact_pairs: bool = True) -> LowerBoundGraph:
    """Solve every triplet program, drop infeasible passages and fill ``pair_lb``."""
    lb: dict[tuple[int, int, int], float] = {}
    dropped = []
    solves = 0
    for (u, v) in sorted(instance.edge_at):
        for w in instance.out_nbrs[v]:
            solves += 1
            val = triplet_lower_bound(instance, u, v, w)
            if val is None:
                dropped.append((u, v, w))
            else:
                lb[(u, v, w)] = val
    succ: dict[tuple[int, int], list[tuple[int, float]]] = {}
    pred: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for (u, v, w), val in lb.items():
        succ.setdefault((u, v), []).append((w, val))
        pred.setdefault((v, w), []).append((u, val))
    g = LowerBoundGraph(instance.n, lb, succ, pred, np.zeros((0, 0)), dropped, solves)
    g.out = {v: list(instance.out_nbrs[v]) for v in range(instance.n)}
    g.pair_lb = all_pairs_min_lb(g, instance, exact=exact_pairs)
    return g


def all_pairs_min_lb(lbg: LowerBoundGraph, instance: GcsInstance, exact: bool = True, budget: int = PAIR_SEARCH_BUDGET) -> np.ndarray:
    """Minimal lb-sum over simple paths for every ordered vertex pair (+inf when unreachable).

    Walk minima from a backward search over triplet states serve as an
    admissible heuristic for a best-first search over simple paths; if that
    search exceeds ``budget`` expansions the walk minimum is kept instead.
    """
    n = instance.n
    pair = np.full((n, n), INF)
    for u in range(n):
        pair[u, u] = 0.0
    for (u, v) in instance.edge_at:
        pair[u, v] = 0.0
    for t in range(n):
        h = lbg.walk_to(t)
        for s in range(n):
            if np.isfinite(pair[s, t]):
                continue
            starts = [(s, a) for a in instance.out_nbrs[s] if (s, a) in h]
            if not starts:
                continue
            walk_min = min(h[st] for st in starts)
            if not exact:
                pair[s, t] = walk_min
                continue
            val = _simple_min(lbg, s, t, h, budget)
            if val is None:
                lbg.approximate_pairs += 1
                val = walk_min
            pair[s, t] = val
    return pair


def _simple_min(lbg: LowerBoundGraph, s: int, t: int, h: dict, budget: int) -> float | None:
    tie = itertools.count()
    heap = []
    for (a, b), _ in h.items():
        if a == s:
            heapq.heappush(heap, (h[(a, b)], 0.0, next(tie), (s, b), False))
    expansions = 0
    while heap:
        f, g, _, path, goal = heapq.heappop(heap)
        if goal:
            return g
        expansions += 1
        if expansions > budget:
            return None
        a, b = path[-2], path[-1]
        for c, val in lbg.successors(a, b):
            if c in path:
                continue
            if c == t:
                heapq.heappush(heap, (g + val, g + val, next(tie), path + (c,), True))
            elif (b, c) in h:
                heapq.heappush(heap, (g + val + h[(b, c)], g + val, next(tie), path + (c,), False))
    return INF


def path_lb_cost(lbg: LowerBoundGraph, path: Sequence[int], closed: bool = False) -> float:
    """Sum of triplet bounds along ``path``; closed paths add the wraparound triplet."""
    path = tuple(path)
    if closed and (path[0] != path[-1] or len(path) < 3):
        raise ValueError("closed path must repeat its first vertex and have at least 3 entries")
    trip = [path[i : i + 3] for i in range(len(path) - 2)]
    if closed:
        trip.append((path[-2], path[0], path[1]))
    total = 0.0
    for p in trip:
        val = lbg.lb.get(tuple(p))
        if val is None:
            raise ValueError(f"invalid passage {tuple(p)}")
        total += val
    return total
