"""Hierarchical tour search: Lawler-Murty over restricted TSPs on top, bound-ordered path unfolding below."""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .conic import NUMERICAL_FAILURE, TrajectoryCache, prefix_lower_bound
from .lbg import LowerBoundGraph, build_lbg, path_lb_cost
from .model import GcsInstance
from .rtsp import CutPool, TripletRtsp, abstract_triplet_costs, tour_edges, tour_value
from .unfold import StepModel, Unfolder, prune_level

OPTIMAL = "optimal"
BOUNDED = "bounded-suboptimal"
TIME_LIMIT = "time-limit"
INFEASIBLE = "infeasible"
HEURISTIC = "heuristic"

SLACK = 1e-9
CHAIN_TOL = 1e-6


@dataclass
class SearchNode:
    include: frozenset
    exclude: frozenset
    tour: tuple[int, ...] | None
    lb: float
    order: int
    parent: int | None = None
    cost: float = math.inf
    path: tuple[int, ...] | None = None
    traj: list | None = None


@dataclass
class Solution:
    status: str
    cost: float
    lb_star: float | None
    rho: float | None
    tour: tuple[int, ...] = ()
    path: tuple[int, ...] = ()
    trajectory: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    epsilon: float = 0.0

    def to_dict(self, instance: GcsInstance | None = None) -> dict:
        name = (lambda seq: instance.path_ids(seq)) if instance is not None else list
        return {
            "status": self.status,
            "cost": _num(self.cost),
            "lb_star": _num(self.lb_star),
            "rho": _num(self.rho),
            "epsilon": self.epsilon,
            "tour": name(self.tour),
            "path": name(self.path),
            "trajectory": [np.asarray(x, float).tolist() for x in self.trajectory],
            "stats": {k: _num(v) if isinstance(v, float) else v for k, v in self.stats.items()},
        }

    def to_json(self, instance: GcsInstance | None = None) -> str:
        return json.dumps(self.to_dict(instance), indent=1)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def gap(cost: float, lb_star: float | None) -> float | None:
    """Relative optimality gap with negative values capped at zero."""
    if lb_star is None or not math.isfinite(cost):
        return None
    if cost <= 0:
        return 0.0
    return max(0.0, (cost - lb_star) / cost)


def _stats() -> dict:
    return dict(
        tours_explored=0,
        paths_unfolded=0,
        conic_solves=0,
        cache_hits=0,
        rtsp_solves=0,
        wall_time_s=0.0,
        lbg_solves=0,
        lbg_time_s=0.0,
        nodes_popped=0,
        infeasible_children=0,
        numerical_failures=0,
        cuts=0,
        order_violations=0,
        duplicate_tours=0,
        chain_violations=0,
        prefix_solves=0,
    )


class _Run:
    """Mutable state shared by the tour loop and path evaluation."""

    def __init__(self, instance, step_model, cache, epsilon, deadline, on_event, chain, stats, tour_bound=None):
        self.instance = instance
        self.step = step_model
        self.cache = cache
        self.eps = epsilon
        self.deadline = deadline
        self.on_event = on_event
        self.chain = chain
        self.stats = stats
        self.best: SearchNode | None = None
        self.tour_bound = tour_bound
        self.max_paths: int | None = None
        self.prefix: Callable | None = None
        # False when the step model is not a lower bound (heuristic guidance only)
        self.prune = True
        self._prefix_memo: dict[tuple[int, ...], float | None] = {}

    def use_prefix_bounds(self) -> None:
        def bound(path):
            if path not in self._prefix_memo:
                self.stats["prefix_solves"] += 1
                self._prefix_memo[path] = prefix_lower_bound(self.instance, path)
            return self._prefix_memo[path]

        self.prefix = bound

    @property
    def best_cost(self) -> float:
        return self.best.cost if self.best is not None else math.inf

    def expired(self) -> bool:
        return self.deadline is not None and time.monotonic() > self.deadline

    def emit(self, kind: str, **data) -> None:
        if self.on_event is not None:
            self.on_event({"event": kind, "t": round(time.monotonic(), 6), **data})

    def _try(self, node: SearchNode, path: tuple[int, ...], lval: float | None = None) -> None:
        """Solve the restriction on ``path`` and update the incumbents."""
        before = self.cache.solves
        res = self.cache.get(path, True)
        if self.cache.solves > before:
            self.stats["conic_solves"] += 1
        else:
            self.stats["cache_hits"] += 1
        if res.status == NUMERICAL_FAILURE:
            self.stats["numerical_failures"] += 1
            return
        if not res.ok:
            return
        if self.tour_bound is not None and lval is not None:
            tb = self.tour_bound(node.tour)
            if tb > lval + CHAIN_TOL or lval > res.cost + CHAIN_TOL:
                self.stats["chain_violations"] += 1
            if self.chain is not None:
                self.chain.append((node.tour, tb, path, lval, res.cost))
        if res.cost < node.cost:
            node.cost, node.path, node.traj = res.cost, tuple(path), res.points
            if node.cost < self.best_cost:
                self.best = node
                self.emit("incumbent", cost=node.cost, tour=list(node.tour), path=list(path))

    def _direct_lb(self, tour: tuple[int, ...]) -> float:
        if not isinstance(self.step, LowerBoundGraph):
            return -math.inf
        try:
            return path_lb_cost(self.step, tour, closed=True)
        except ValueError:
            # a passage with an infeasible restriction
            return math.inf

    def evaluate(self, node: SearchNode) -> bool:
        """Unfold ``node.tour`` and keep its cheapest trajectory; False if the deadline hit."""
        scale = 1.0 - self.eps
        tour = node.tour
        bound = scale * min(self.best_cost, node.cost) if self.prune else math.inf
        if all(self.instance.has_edge(a, b) for a, b in zip(tour, tour[1:])):
            # the direct realization gives an incumbent before any unfolding
            direct_lb = self._direct_lb(tour)
            if not (self.prune and direct_lb >= prune_level(bound)):
                self._try(node, tour, direct_lb if math.isfinite(direct_lb) else None)
                bound = scale * min(self.best_cost, node.cost) if self.prune else math.inf
        unf = Unfolder(self.step, node.tour, bound=bound, deadline=self.deadline, prefix=self.prefix)
        self.stats["tours_explored"] += 1
        count = 0
        for path, fval in unf:
            lval = unf.last_lb
            self.stats["paths_unfolded"] += 1
            count += 1
            if self.prune and fval >= prune_level(scale * node.cost):
                break
            self._try(node, path, lval)
            if self.prune:
                unf.bound = scale * min(self.best_cost, node.cost)
            if self.max_paths is not None and count >= self.max_paths:
                break
            if self.expired():
                return False
        return not unf.timed_out


def _lawler_murty(run: _Run, model, certify: bool, seen: set | None) -> tuple[str, float]:
    """Pop restrictions by bound; returns (status, certified lower bound)."""
    stats = run.stats
    eps = run.eps
    counter = itertools.count()
    root = SearchNode(frozenset(), frozenset(), None, 0.0, next(counter))
    heap = [(0.0, root.order, root)]
    last_pop = -math.inf
    while heap:
        if run.expired():
            return TIME_LIMIT, min(heap[0][0], (1 - eps) * run.best_cost)
        lb, _, node = heapq.heappop(heap)
        if node.tour is None:
            # children are solved lazily: their parent bound is a valid key until popped
            stats["rtsp_solves"] += 1
            res = model.solve(node.include, node.exclude)
            if res is None:
                stats["infeasible_children"] += 1
                continue
            node.tour = res.tour
            node.lb = max(res.value, lb)
            if seen is not None:
                key = frozenset(tour_edges(res.tour))
                if key in seen:
                    stats["duplicate_tours"] += 1
                seen.add(key)
            heapq.heappush(heap, (node.lb, node.order, node))
            continue
        stats["nodes_popped"] += 1
        if lb < last_pop - SLACK:
            stats["order_violations"] += 1
        last_pop = lb
        run.emit("pop", lb=lb, tour=list(node.tour), include=sorted(node.include), exclude=sorted(node.exclude))
        if certify and run.best is not None and run.best_cost - lb <= eps * run.best_cost + SLACK:
            run.emit("terminate", lb=lb, cost=run.best_cost)
            # explored tours are only certified down to (1 - eps) C*
            return (OPTIMAL if eps == 0 else BOUNDED), min(lb, (1 - eps) * run.best_cost)
        if not run.evaluate(node):
            pending = min([lb] + [h[0] for h in heap])
            return TIME_LIMIT, min(pending, (1 - eps) * run.best_cost)
        edges = tour_edges(node.tour)
        for i, e in enumerate(edges):
            if e in node.include:
                continue
            child = SearchNode(
                node.include | frozenset(edges[:i]),
                node.exclude | {e},
                None,
                node.lb,
                next(counter),
                parent=node.order,
            )
            heapq.heappush(heap, (node.lb, child.order, child))
    if run.best is None:
        return INFEASIBLE, math.inf
    return (OPTIMAL if eps == 0 else BOUNDED), (1 - eps) * run.best_cost


def _finish(run: _Run, status: str, lb_star: float | None, t0: float) -> Solution:
    stats = run.stats
    stats["wall_time_s"] = time.monotonic() - t0
    best = run.best
    if best is None:
        if status in (OPTIMAL, BOUNDED):
            status = INFEASIBLE
        return Solution(status, math.inf, lb_star, None, stats=stats, epsilon=run.eps)
    if status == OPTIMAL and lb_star is not None:
        rho = 0.0
    else:
        rho = gap(best.cost, lb_star)
    return Solution(status, best.cost, lb_star, rho, best.tour, best.path, list(best.traj), stats, run.eps)


def solve(
    instance: GcsInstance,
    epsilon: float = 0.0,
    time_limit: float | None = 100.0,
    lbg: LowerBoundGraph | None = None,
    cache: TrajectoryCache | None = None,
    cost_rule: str = "detour",
    on_event: Callable[[dict], None] | None = None,
    chain: list | None = None,
    debug: bool = True,
    prefix_bounds: bool = True,
) -> Solution:
    """Exact (epsilon = 0) or bounded-suboptimal tour search.

    ``chain`` collects (tour, tour bound, path, path bound, cost) for every
    evaluated trajectory; ``debug`` tracks generated tours to detect repeats.
    ``prefix_bounds`` tightens path unfolding with convex bounds on prefixes
    that end at a waypoint; results are unchanged, only pruning improves.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    if instance.n < 3:
        raise ValueError("tours need at least 3 vertices")
    t0 = time.monotonic()
    deadline = None if time_limit is None else t0 + time_limit
    stats = _stats()
    cache = cache if cache is not None else TrajectoryCache(instance)
    if lbg is None:
        lbg = build_lbg(instance)
        stats["lbg_solves"] = lbg.solves
    stats["lbg_time_s"] = time.monotonic() - t0
    costs = abstract_triplet_costs(lbg, cost_rule)
    model = TripletRtsp(instance.n, costs, CutPool())
    run = _Run(instance, lbg, cache, epsilon, deadline, on_event, chain, stats, tour_bound=lambda t: tour_value(costs, t))
    if prefix_bounds:
        run.use_prefix_bounds()
    if run.expired():
        return _finish(run, TIME_LIMIT, 0.0, t0)
    status, lb_star = _lawler_murty(run, model, certify=True, seen=set() if debug else None)
    stats["cuts"] = len(model.pool)
    return _finish(run, status, lb_star, t0)


def evaluate_tour(
    instance: GcsInstance,
    step_model: StepModel,
    tour: Sequence[int],
    cache: TrajectoryCache | None = None,
    bound: float = math.inf,
) -> SearchNode:
    """Best trajectory among realizations of one abstract tour (no pruning beyond ``bound``)."""
    cache = cache if cache is not None else TrajectoryCache(instance)
    run = _Run(instance, step_model, cache, 0.0, None, None, None, _stats())
    node = SearchNode(frozenset(), frozenset(), tuple(tour), 0.0, 0)
    if math.isfinite(bound):
        run.best = SearchNode(frozenset(), frozenset(), tuple(tour), 0.0, -1, cost=bound)
    run.evaluate(node)
    return node
