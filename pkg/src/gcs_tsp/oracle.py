"""Brute-force reference solvers for small instances.

Nothing here uses the lower-bound graph or the restricted TSP, so results
can be compared against the main search.
"""

from __future__ import annotations

import itertools
import math
import time
from typing import Iterator, Sequence

from .conic import INFEASIBLE, NUMERICAL_FAILURE, TrajectoryCache
from .ghost import OPTIMAL, Solution
from .model import GcsInstance

REL_TIE = 1e-6


class OracleIncomplete(RuntimeError):
    """The enumeration budget ran out before the search was exhaustive."""


def realizations(instance: GcsInstance, abstract: Sequence[int], simple_segments: bool = True, limit: int | None = None) -> Iterator[tuple[int, ...]]:
    """Depth-first enumeration of GCS paths visiting ``abstract`` in order.

    With ``simple_segments`` no vertex repeats between two consecutive
    waypoints (waypoints matched greedily); without it the set is infinite,
    so ``limit`` must be given.
    """
    abstract = tuple(abstract)
    if not simple_segments and limit is None:
        raise ValueError("non-simple enumeration needs a limit")
    k = len(abstract)
    count = 0

    def rec(path, label, seg):
        nonlocal count
        if label == k:
            count += 1
            yield path
            return
        if limit is not None and len(path) > limit:
            return
        for c in sorted(instance.out_nbrs[path[-1]]):
            if simple_segments and c in path[seg:]:
                continue
            if c == abstract[label]:
                yield from rec(path + (c,), label + 1, len(path))
            else:
                yield from rec(path + (c,), label, seg)

    yield from rec((abstract[0],), 1, 0)


def visit_orders(n: int) -> Iterator[tuple[int, ...]]:
    """Hamiltonian cycles as closed sequences starting at vertex 0 (rotations quotiented)."""
    for rest in itertools.permutations(range(1, n)):
        yield (0, *rest, 0)


def _tour_feasible(instance: GcsInstance, tour: tuple[int, ...]) -> bool:
    # waypoint order must be realizable in the underlying digraph
    reach = [[False] * instance.n for _ in range(instance.n)]
    for s in range(instance.n):
        stack = [s]
        while stack:
            a = stack.pop()
            for b in instance.out_nbrs[a]:
                if not reach[s][b]:
                    reach[s][b] = True
                    stack.append(b)
    return all(reach[a][b] for a, b in zip(tour, tour[1:]))


def brute_force(
    instance: GcsInstance,
    max_vertices: int = 7,
    max_paths_per_tour: int = 100_000,
    time_limit: float | None = None,
) -> Solution:
    """Globally optimal tour by exhaustive search over visit orders and realizations.

    Prefixes are cut when their open-path optimum already matches the
    incumbent (within a relative 1e-6), which never removes a strictly
    better solution beyond that tolerance: a closed path charges every term
    its prefix does.
    """
    n = instance.n
    if n > max_vertices:
        raise ValueError(f"instance too large for the oracle: {n} > {max_vertices} vertices")
    if n < 3:
        raise ValueError("tours need at least 3 vertices")
    t0 = time.monotonic()
    cache = TrajectoryCache(instance)
    open_cost: dict[tuple[int, ...], float] = {}
    best = math.inf
    best_path: tuple[int, ...] | None = None
    best_tour: tuple[int, ...] | None = None
    best_traj: list = []
    evaluated = 0
    tours = 0

    def cut(value: float) -> bool:
        return math.isfinite(best) and value >= best - max(1e-9, REL_TIE * abs(best))

    def prefix_cost(path: tuple[int, ...]) -> float:
        if path not in open_cost:
            res = cache.get(path, False)
            if res.status == INFEASIBLE:
                open_cost[path] = math.inf
            elif not res.ok:
                # unknown: do not prune on it
                open_cost[path] = -math.inf
            else:
                open_cost[path] = res.cost
        return open_cost[path]

    orders = [t for t in visit_orders(n) if _tour_feasible(instance, t)]
    # direct realizations first give a good incumbent for pruning
    for tour in orders:
        if all(instance.has_edge(a, b) for a, b in zip(tour, tour[1:])):
            res = cache.get(tour, True)
            if res.ok and res.cost < best:
                best, best_path, best_tour, best_traj = res.cost, tour, tour, res.points
    for tour in orders:
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            raise OracleIncomplete("oracle incomplete: time limit reached")
        tours += 1
        k = len(tour)
        paths = 0
        stack = [((tour[0],), 1, 0)]
        while stack:
            path, label, seg = stack.pop()
            if label == k:
                paths += 1
                if paths > max_paths_per_tour:
                    raise OracleIncomplete(f"oracle incomplete: more than {max_paths_per_tour} realizations of tour {tour}")
                res = cache.get(path, True)
                evaluated += 1
                if res.status == NUMERICAL_FAILURE:
                    raise OracleIncomplete(f"oracle incomplete: numerical failure on {path}")
                if res.ok and res.cost < best:
                    best, best_path, best_tour, best_traj = res.cost, path, tour, res.points
                continue
            if len(path) > 1:
                pc = prefix_cost(path)
                if math.isinf(pc) and pc > 0 or cut(pc):
                    continue
            for c in sorted(instance.out_nbrs[path[-1]], reverse=True):
                if c in path[seg:]:
                    continue
                if c == tour[label]:
                    stack.append((path + (c,), label + 1, len(path)))
                else:
                    stack.append((path + (c,), label, seg))
    stats = {
        "tours_explored": tours,
        "paths_unfolded": evaluated,
        "conic_solves": cache.solves,
        "cache_hits": cache.hits,
        "rtsp_solves": 0,
        "wall_time_s": time.monotonic() - t0,
    }
    if best_path is None:
        return Solution("infeasible", math.inf, None, None, stats=stats)
    return Solution(OPTIMAL, best, best, 0.0, best_tour, best_path, list(best_traj), stats)


# --- reference versions of the intermediate problems ------------------------------


def brute_force_rtsp(
    n: int,
    costs: dict[tuple[int, int, int], float],
    include: Sequence[tuple[int, int]] = (),
    exclude: Sequence[tuple[int, int]] = (),
) -> tuple[tuple[int, ...] | None, float]:
    """Cheapest Hamiltonian cycle under triplet costs by enumerating visit orders."""
    include, exclude = set(include), set(exclude)
    best, best_tour = math.inf, None
    for tour in visit_orders(n):
        edges = set(zip(tour, tour[1:]))
        if not include <= edges or edges & exclude:
            continue
        total = 0.0
        body = tour[:-1]
        for i in range(n):
            p = (body[i - 1], body[i], body[(i + 1) % n])
            if p not in costs:
                total = math.inf
                break
            total += costs[p]
        if total < best:
            best, best_tour = total, tour
    return best_tour, best


def simple_path_lb(instance: GcsInstance, lb: dict[tuple[int, int, int], float], u: int, w: int) -> float:
    """Minimum triplet sum over simple paths u -> w (interior triplets only)."""
    if u == w:
        return 0.0
    best = math.inf

    def rec(path, total):
        nonlocal best
        if total >= best:
            return
        last = path[-1]
        if last == w:
            best = total
            return
        for c in instance.out_nbrs[last]:
            if c in path:
                continue
            if len(path) >= 2:
                p = (path[-2], last, c)
                if p not in lb:
                    continue
                rec(path + (c,), total + lb[p])
            else:
                rec(path + (c,), total)

    rec((u,), 0.0)
    return best
