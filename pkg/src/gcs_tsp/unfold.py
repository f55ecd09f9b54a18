"""Best-first enumeration of GCS paths that realize an abstract path.

Nodes carry a concrete vertex sequence and a label counting how many
abstract waypoints it has already reached.  Realizations come out in
non-decreasing bound order, so a caller can stop as soon as the next bound
exceeds what it already holds.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterator, Protocol, Sequence

# A candidate whose bound reaches the pruning cost within the tie tolerance
# cannot beat it by more than that, so ties are pruned.  The relative part
# sits well above conic solver accuracy.
SLACK = 1e-9
REL_TIE = 1e-6


def prune_level(bound: float) -> float:
    """Bounds at or above this value are treated as ties with ``bound``."""
    return bound - max(SLACK, REL_TIE * abs(bound)) if math.isfinite(bound) else bound


class StepModel(Protocol):
    """Cost model queried by the unfolding search."""

    def first_steps(self, v1: int) -> list[tuple[int, float]]: ...

    def successors(self, a: int, b: int) -> list[tuple[int, float]]: ...

    def closing_cost(self, a: int, v1: int, b: int) -> float | None: ...

    def pair(self, u: int, v: int) -> float: ...

    def center_min(self, v: int) -> float: ...

    def step_min(self, a: int, b: int) -> float: ...


@dataclass(frozen=True)
class UnfoldNode:
    path: tuple[int, ...]
    label: int
    g: float
    f: float
    seg_start: int
    goal: bool = False
    h: float = 0.0
    # prefix bound minus the triplet sum of the prefix it was computed on
    offset: float | None = None
    tight: bool = False

    def key(self):
        return (self.f, -self.label, -self.g, self.path)


class Unfolder:
    """Lazy stream of (path, bound) pairs realizing ``abstract``.

    ``bound`` is the pruning cost; callers may lower it between yields.
    When ``record`` is a list, every generated node is appended as (path, f).

    ``prefix`` optionally maps a partial path to a lower bound on its cost
    share (see ``conic.prefix_lower_bound``), or ``None`` when that prefix
    admits no trajectory.  It is queried lazily when a node is first popped
    and tightens bounds with the pathmax rule, so yielded bounds stay
    non-decreasing but may exceed the plain triplet sum.  ``last_lb`` holds
    that plain sum for the most recent yield.
    """

    def __init__(
        self,
        model: StepModel,
        abstract: Sequence[int],
        bound: float = math.inf,
        simple_segments: bool = True,
        record: list | None = None,
        deadline: float | None = None,
        prefix: Callable[[tuple[int, ...]], float | None] | None = None,
    ):
        self.model = model
        self.abstract = tuple(abstract)
        if len(self.abstract) < 2:
            raise ValueError("abstract path needs at least 2 vertices")
        self.closed = len(self.abstract) > 2 and self.abstract[0] == self.abstract[-1]
        self.bound = bound
        self.simple = simple_segments
        self.record = record
        self.deadline = deadline
        self.prefix = prefix
        self.expanded = 0
        self.generated = 0
        self.timed_out = False
        self.last_lb = math.nan
        k = len(self.abstract)
        ap = self.abstract
        # suffix[l]: pair bounds between waypoints l..k-1 (0-based) plus the
        # cheapest passage centered at each of those waypoints that is still
        # charged (the final one only when the closing passage applies)
        suffix = [0.0] * (k + 1)
        self._wrap = model.center_min(ap[0]) if self.closed else 0.0
        suffix[k - 1] = self._wrap
        for i in range(k - 2, -1, -1):
            suffix[i] = suffix[i + 1] + model.pair(ap[i], ap[i + 1]) + model.center_min(ap[i])
        self._suffix = suffix

    def heuristic(self, prev: int, last: int, label: int) -> float:
        """Admissible estimate of the bound still to be charged after ``(.., prev, last)``."""
        k = len(self.abstract)
        if label >= k:
            return 0.0
        return self.model.step_min(prev, last) + self.model.pair(last, self.abstract[label]) + self._suffix[label]

    def _child(self, node: UnfoldNode, c: int, cost: float) -> UnfoldNode | None:
        path = node.path + (c,)
        label, seg = node.label, node.seg_start
        if self.simple and c in node.path[seg:]:
            return None
        if c == self.abstract[label]:
            label += 1
            seg = len(path) - 1
        g = node.g + cost
        k = len(self.abstract)
        if label == k:
            lval = g
            if self.closed:
                wrap = self.model.closing_cost(path[-2], path[0], path[1])
                if wrap is None:
                    return None
                lval += wrap
            return UnfoldNode(path, label, lval, max(lval, node.f), seg, True, node.offset)
        h = self.heuristic(path[-2], c, label)
        if math.isinf(h):
            return None
        f = max(g + h, node.f)
        if node.offset is not None:
            f = max(f, self._tightened(g, h, node.offset))
        return UnfoldNode(path, label, g, f, seg, False, h, node.offset)

    def _tightened(self, g: float, h: float, offset: float) -> float:
        # the prefix share already covers the closing passage's terms
        return g + offset + h - self._wrap

    def _tighten(self, node: UnfoldNode) -> UnfoldNode | None:
        pb = self.prefix(node.path)
        if pb is None:
            return None
        offset = pb - node.g
        f = max(node.f, self._tightened(node.g, node.h, offset))
        return UnfoldNode(node.path, node.label, node.g, f, node.seg_start, False, node.h, offset, True)

    def _push(self, heap: list, node: UnfoldNode | None) -> None:
        if node is None:
            return
        self.generated += 1
        if self.record is not None:
            self.record.append((node.path, node.f))
        if node.f < prune_level(self.bound):
            heapq.heappush(heap, (node.f, -node.label, -node.g, node.path, node))

    def __iter__(self) -> Iterator[tuple[tuple[int, ...], float]]:
        v1 = self.abstract[0]
        heap: list = []
        root = UnfoldNode((v1,), 1, 0.0, 0.0, 0, tight=True)
        for u, cost in self.model.first_steps(v1):
            self._push(heap, self._child(root, u, cost))
        while heap:
            if self.deadline is not None and time.monotonic() > self.deadline:
                self.timed_out = True
                return
            node = heapq.heappop(heap)[-1]
            if node.f >= prune_level(self.bound):
                continue
            if self.prefix is not None and not node.goal and not node.tight and math.isfinite(self.bound):
                tightened = self._tighten(node)
                if tightened is None:
                    continue
                if tightened.f > node.f:
                    if tightened.f < prune_level(self.bound):
                        heapq.heappush(heap, (tightened.f, -tightened.label, -tightened.g, tightened.path, tightened))
                    continue
                node = tightened
            if node.goal:
                self.last_lb = node.g
                yield node.path, node.f
                continue
            self.expanded += 1
            a, b = node.path[-2], node.path[-1]
            for c, cost in self.model.successors(a, b):
                self._push(heap, self._child(node, c, cost))


def unfold_paths(model: StepModel, abstract: Sequence[int], bound: float = math.inf, simple_segments: bool = True) -> Iterator[tuple[tuple[int, ...], float]]:
    return iter(Unfolder(model, abstract, bound, simple_segments))


def is_realization(instance, abstract: Sequence[int], path: Sequence[int], simple_segments: bool = True) -> bool:
    """Check that ``path`` is a valid GCS path visiting the waypoints in order with greedy matching."""
    abstract, path = tuple(abstract), tuple(path)
    if path[0] != abstract[0] or path[-1] != abstract[-1]:
        return False
    if any(not instance.has_edge(a, b) for a, b in zip(path, path[1:])):
        return False
    label, seg = 1, 0
    for i, c in enumerate(path[1:], start=1):
        if label == len(abstract):
            return False
        if simple_segments and c in path[seg:i]:
            return False
        if c == abstract[label]:
            label += 1
            seg = i
    return label == len(abstract)
