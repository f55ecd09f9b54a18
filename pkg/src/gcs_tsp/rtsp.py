"""Restricted TSP over abstract triplets, plus an edge-variable variant.

Both models take inclusion/exclusion sets of abstract edges and enforce
tour-ness by lazily added subtour cuts that live in a shared pool, so a
cut found for one restriction is reused by every later one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .lbg import LowerBoundGraph

Edge = tuple[int, int]
Triplet = tuple[int, int, int]
INF = math.inf


class RtspError(RuntimeError):
    pass


# ---------------------------------------------------------------- costs


def abstract_triplet_costs(lbg: LowerBoundGraph, rule: str = "detour") -> dict[Triplet, float]:
    """b(u, v, w) for every pairwise distinct triplet (+inf marks unusable ones).

    ``rule="paper"`` uses the four-case b_mid split that assumes a direct
    edge is always taken when it exists.  ``rule="detour"`` (default) instead
    minimizes over the actual predecessor x and successor y of v, charging
    half of any detour on either side; it lower-bounds every segment-simple
    realization, including those that detour around an existing edge.
    """
    if rule == "paper":
        return _paper_costs(lbg)
    if rule != "detour":
        raise ValueError(f"unknown rule {rule!r}")
    n = lbg.n
    fwd = [lbg.walk_from(u) for u in range(n)]
    bwd = [lbg.walk_to(w) for w in range(n)]
    costs: dict[Triplet, float] = {}
    for v in range(n):
        centered = [(x, y, val) for (x, c, y), val in lbg.lb.items() if c == v]
        xs = sorted({x for x, _, _ in centered})
        ys = sorted({y for _, y, _ in centered})
        if not centered:
            for u, w in itertools.permutations([i for i in range(n) if i != v], 2):
                costs[(u, v, w)] = INF
            continue
        xi = {x: i for i, x in enumerate(xs)}
        yi = {y: i for i, y in enumerate(ys)}
        mid = np.full((len(xs), len(ys)), INF)
        for x, y, val in centered:
            mid[xi[x], yi[y]] = val
        din = np.array([[fwd[u].get((x, v), INF) for x in xs] for u in range(n)])
        dout = np.array([[bwd[w].get((v, y), INF) for w in range(n)] for y in ys])
        left = np.min(0.5 * din[:, :, None] + mid[None, :, :], axis=1)
        full = np.min(left[:, :, None] + 0.5 * dout[None, :, :], axis=1)
        for u in range(n):
            for w in range(n):
                if len({u, v, w}) == 3:
                    costs[(u, v, w)] = float(full[u, w])
    return costs


def _paper_costs(lbg: LowerBoundGraph) -> dict[Triplet, float]:
    n = lbg.n
    edges = {(a, b) for a, nb in lbg.out.items() for b in nb}
    by_in: dict[Edge, float] = {}
    by_out: dict[Edge, float] = {}
    center = [INF] * n
    for (x, v, y), val in lbg.lb.items():
        by_in[(x, v)] = min(by_in.get((x, v), INF), val)
        by_out[(v, y)] = min(by_out.get((v, y), INF), val)
        center[v] = min(center[v], val)
    costs = {}
    for u, v, w in itertools.permutations(range(n), 3):
        e1, e2 = (u, v) in edges, (v, w) in edges
        if e1 and e2:
            mid = lbg.lb.get((u, v, w), INF)
        elif e1:
            mid = by_in.get((u, v), INF)
        elif e2:
            mid = by_out.get((v, w), INF)
        else:
            mid = center[v]
        costs[(u, v, w)] = 0.5 * lbg.pair(u, v) + mid + 0.5 * lbg.pair(v, w)
    return costs


def tour_triplets(tour: Sequence[int]) -> list[Triplet]:
    """Triplets of a closed tour (first vertex repeated at the end), wraparound included."""
    cyc = list(tour[:-1])
    m = len(cyc)
    return [(cyc[i - 1], cyc[i], cyc[(i + 1) % m]) for i in range(m)]


def tour_edges(tour: Sequence[int]) -> list[Edge]:
    return list(zip(tour, tour[1:]))


def tour_value(costs: dict[Triplet, float], tour: Sequence[int]) -> float:
    return float(sum(costs.get(p, INF) for p in tour_triplets(tour)))


def canonical_tour(cycle: Sequence[int]) -> tuple[int, ...]:
    cyc = list(cycle)
    i = cyc.index(min(cyc))
    cyc = cyc[i:] + cyc[:i]
    return tuple(cyc + [cyc[0]])


# ---------------------------------------------------------------- solving


@dataclass
class CutPool:
    """Vertex subsets S whose inner variables are capped at |S| - 1."""

    sets: list[frozenset[int]] = field(default_factory=list)

    def add(self, s: Iterable[int]) -> bool:
        fs = frozenset(s)
        if fs in self.sets:
            return False
        self.sets.append(fs)
        return True

    def __len__(self) -> int:
        return len(self.sets)


@dataclass
class RtspResult:
    tour: tuple[int, ...]
    value: float
    cuts_added: int
    milp_solves: int


class _TourModel:
    """Shared cut loop; subclasses define variables, base rows and decoding."""

    keys: list
    cost: np.ndarray

    def __init__(self, n: int, pool: CutPool | None = None):
        if n < 3:
            raise ValueError("tours need at least 3 vertices")
        self.n = n
        self.pool = pool if pool is not None else CutPool()
        self.milp_solves = 0

    def _edges_of(self, key) -> list[Edge]:
        raise NotImplementedError

    def _inside(self, key, s: frozenset) -> bool:
        raise NotImplementedError

    def _base_rows(self, include: set[Edge]):
        raise NotImplementedError

    def _cycles(self, active: list) -> list[list[int]]:
        raise NotImplementedError

    def solve(self, include: Iterable[Edge] = (), exclude: Iterable[Edge] = (), max_rounds: int | None = None) -> RtspResult | None:
        include, exclude = set(include), set(exclude)
        if include & exclude:
            return None
        nv = len(self.keys)
        if nv == 0:
            return None
        ub = np.ones(nv)
        for j, key in enumerate(self.keys):
            if any(e in exclude for e in self._edges_of(key)):
                ub[j] = 0.0
        rows, lo, hi = self._base_rows(include)
        cuts_added = 0
        limit = max_rounds if max_rounds is not None else nv + 1
        for _ in range(limit):
            r, l, h = list(rows), list(lo), list(hi)
            for s in self.pool.sets:
                r.append([j for j, key in enumerate(self.keys) if self._inside(key, s)])
                l.append(-np.inf)
                h.append(len(s) - 1)
            x = self._milp(r, l, h, ub)
            if x is None:
                return None
            active = [self.keys[j] for j in np.flatnonzero(x > 0.5)]
            cycles = self._cycles(active)
            if len(cycles) == 1 and len(cycles[0]) == self.n:
                tour = canonical_tour(cycles[0])
                tour = self._orient(tour, include, exclude)
                return RtspResult(tour, self.value(tour), cuts_added, self.milp_solves)
            for cyc in cycles:
                if self.pool.add(cyc):
                    cuts_added += 1
        raise RtspError("subtour elimination did not converge")

    def _orient(self, tour, include, exclude):
        # orientation ties go to the lexicographically smaller sequence
        rev = canonical_tour(tour[::-1][:-1])
        if rev < tour:
            edges = set(tour_edges(rev))
            if include <= edges and not (exclude & edges) and self.value(rev) <= self.value(tour) + 1e-12:
                return rev
        return tour

    def value(self, tour) -> float:
        raise NotImplementedError

    def _milp(self, rows, lo, hi, ub):
        self.milp_solves += 1
        nv = len(self.keys)
        ri, ci = [], []
        for i, row in enumerate(rows):
            for j, coef in (row.items() if isinstance(row, dict) else ((j, 1.0) for j in row)):
                ri.append(i)
                ci.append(j)
        vals = []
        for row in rows:
            vals.extend(row.values() if isinstance(row, dict) else [1.0] * len(row))
        A = coo_matrix((vals, (ri, ci)), shape=(len(rows), nv)).tocsr()
        lo, hi = np.array(lo, float), np.array(hi, float)
        # HiGHS presolve occasionally reports an optimum that violates a row;
        # every answer is checked and the solve repeated without presolve.
        for presolve in (True, False):
            res = milp(
                self.cost,
                constraints=LinearConstraint(A, lo, hi),
                integrality=np.ones(nv),
                bounds=Bounds(np.zeros(nv), ub),
                options={"mip_rel_gap": 0.0, "presolve": presolve},
            )
            if res.status == 2 or res.x is None:
                if presolve:
                    continue
                return None
            if res.status != 0:
                raise RtspError(f"integer program failed: {res.message}")
            x = np.round(res.x)
            ax = A @ x
            if np.all(ax >= lo - 1e-6) and np.all(ax <= hi + 1e-6) and np.all(x <= ub):
                return x
        raise RtspError("integer program returned an infeasible point")


class TripletRtsp(_TourModel):
    """Variables y_p for abstract triplets with finite cost b(p)."""

    def __init__(self, n: int, costs: dict[Triplet, float], pool: CutPool | None = None):
        super().__init__(n, pool)
        self.costs = costs
        self.keys = sorted(p for p, c in costs.items() if math.isfinite(c) and len(set(p)) == 3)
        self.cost = np.array([costs[p] for p in self.keys])
        self._by_edge_in: dict[Edge, list[int]] = {}
        self._by_edge_out: dict[Edge, list[int]] = {}
        for j, (u, v, w) in enumerate(self.keys):
            self._by_edge_in.setdefault((v, w), []).append(j)
            self._by_edge_out.setdefault((u, v), []).append(j)

    def _edges_of(self, key):
        u, v, w = key
        return [(u, v), (v, w)]

    def _inside(self, key, s):
        return key[0] in s and key[1] in s and key[2] in s

    def _base_rows(self, include):
        rows, lo, hi = [], [], []
        for v in range(self.n):
            rows.append([j for j, p in enumerate(self.keys) if p[1] == v])
            lo.append(1.0)
            hi.append(1.0)
        # (., u, v) entering edge (u, v) must match (u, v, .) leaving it
        for e in sorted(set(self._by_edge_in) | set(self._by_edge_out)):
            row = {j: 1.0 for j in self._by_edge_in.get(e, [])}
            for j in self._by_edge_out.get(e, []):
                row[j] = row.get(j, 0.0) - 1.0
            rows.append(row)
            lo.append(0.0)
            hi.append(0.0)
        for e in sorted(include):
            rows.append(self._by_edge_in.get(e, []) + self._by_edge_out.get(e, []))
            lo.append(2.0)
            hi.append(2.0)
        return rows, lo, hi

    def _cycles(self, active):
        nxt = {}
        for u, v, w in active:
            if v in nxt:
                raise RtspError("vertex centered twice")
            nxt[v] = w
        for u, v, w in active:
            if nxt.get(u) != v:
                raise RtspError("inconsistent triplet flow")
        return _follow(nxt)

    def value(self, tour):
        return tour_value(self.costs, tour)


class EdgeRtsp(_TourModel):
    """Classic edge-variable TSP with in/out degree one and DFJ cuts."""

    def __init__(self, n: int, dist: np.ndarray, pool: CutPool | None = None):
        super().__init__(n, pool)
        self.dist = np.asarray(dist, float)
        self.keys = [(u, v) for u in range(n) for v in range(n) if u != v and math.isfinite(self.dist[u, v])]
        self.cost = np.array([self.dist[e] for e in self.keys])

    def _edges_of(self, key):
        return [key]

    def _inside(self, key, s):
        return key[0] in s and key[1] in s

    def _base_rows(self, include):
        rows, lo, hi = [], [], []
        for v in range(self.n):
            rows.append([j for j, e in enumerate(self.keys) if e[0] == v])
            rows.append([j for j, e in enumerate(self.keys) if e[1] == v])
            lo += [1.0, 1.0]
            hi += [1.0, 1.0]
        for e in sorted(include):
            rows.append([j for j, k in enumerate(self.keys) if k == e])
            lo.append(1.0)
            hi.append(1.0)
        return rows, lo, hi

    def _cycles(self, active):
        return _follow(dict(active))

    def value(self, tour):
        return float(sum(self.dist[e] for e in tour_edges(tour)))


def _follow(nxt: dict[int, int]) -> list[list[int]]:
    seen: set[int] = set()
    cycles = []
    for start in sorted(nxt):
        if start in seen:
            continue
        cyc, v = [], start
        while v not in seen:
            seen.add(v)
            cyc.append(v)
            if v not in nxt:
                raise RtspError("open chain in tour decoding")
            v = nxt[v]
        if v != start:
            raise RtspError("malformed cycle in tour decoding")
        cycles.append(cyc)
    return cycles


def solve_rtsp(n: int, costs: dict[Triplet, float], include: Iterable[Edge] = (), exclude: Iterable[Edge] = (), pool: CutPool | None = None) -> RtspResult | None:
    return TripletRtsp(n, costs, pool).solve(include, exclude)


def dump_lp(model: TripletRtsp, include: Iterable[Edge] = (), exclude: Iterable[Edge] = ()) -> str:
    """Plain-text listing of the triplet program for debugging."""
    include, exclude = set(include), set(exclude)
    lines = ["minimize"]
    lines += [f"  {c:+.12g} y{p}" for p, c in zip(model.keys, model.cost)]
    lines.append("subject to")
    for v in range(model.n):
        lines.append(f"  cover[{v}]: sum y(.,{v},.) = 1")
    for e in sorted(include):
        lines.append(f"  include{e}: sum y containing {e} = 2")
    for e in sorted(exclude):
        lines.append(f"  exclude{e}: y containing {e} = 0")
    for s in model.pool.sets:
        lines.append(f"  cut{sorted(s)}: sum y inside <= {len(s) - 1}")
    return "\n".join(lines) + "\n"
