"""Second-order cone programs over named variable blocks, solved with Clarabel.

Every convex subproblem in the package goes through :func:`solve_conic`: the
convex restriction of a fixed path, triplet lower bounds, Chebyshev centers
and the feasibility/boundedness probes used during validation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import clarabel
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .model import ConvexSet, CostTerm, GcsInstance, is_closed

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"

RESIDUAL_TOL = 1e-6

_SETTINGS = dict(
    verbose=False,
    tol_gap_abs=1e-9,
    tol_gap_rel=1e-9,
    tol_feas=1e-9,
    tol_infeas_abs=1e-9,
    tol_infeas_rel=1e-9,
    max_iter=300,
)


@dataclass
class _Rows:
    names: tuple[str, ...]
    M: np.ndarray
    v: np.ndarray


@dataclass
class _Term:
    kind: str
    names: tuple[str, ...]
    M: np.ndarray
    m: np.ndarray
    weight: float


class ConicProgram:
    """Linear and second-order-cone program over named real vector blocks.

    Constraints and objective terms act on the concatenation of the listed
    blocks, in order.
    """

    def __init__(self) -> None:
        self.blocks: dict[str, int] = {}
        self.leq: list[_Rows] = []
        self.eq: list[_Rows] = []
        self.terms: list[_Term] = []

    def add_block(self, name: str, dim: int) -> str:
        if name in self.blocks:
            raise ValueError(f"duplicate block {name!r}")
        self.blocks[name] = int(dim)
        return name

    def _width(self, names: Sequence[str]) -> int:
        try:
            return sum(self.blocks[n] for n in names)
        except KeyError as exc:
            raise ValueError(f"undeclared block {exc.args[0]!r}") from None

    def _rows(self, names, M, v) -> _Rows | None:
        names = tuple(names)
        M = np.atleast_2d(np.asarray(M, dtype=float))
        v = np.asarray(v, dtype=float).reshape(-1)
        if M.size == 0 and len(v) == 0:
            return None
        if M.shape != (len(v), self._width(names)):
            raise ValueError(f"constraint shape {M.shape} does not match blocks {names} / rhs {len(v)}")
        return _Rows(names, M, v)

    def add_leq(self, names: Sequence[str], M, rhs) -> None:
        """``M @ concat(names) <= rhs``."""
        rows = self._rows(names, M, rhs)
        if rows is not None:
            self.leq.append(rows)

    def add_eq(self, names: Sequence[str], M, rhs) -> None:
        """``M @ concat(names) == rhs``."""
        rows = self._rows(names, M, rhs)
        if rows is not None:
            self.eq.append(rows)

    def add_set(self, names: Sequence[str], cset: ConvexSet) -> None:
        self.add_leq(names, cset.A, cset.b)
        self.add_eq(names, cset.C, cset.d)

    def add_cost(self, names: Sequence[str], term: CostTerm, scale: float = 1.0) -> None:
        names = tuple(names)
        if term.M.shape[1] != self._width(names):
            raise ValueError(f"cost term has {term.M.shape[1]} columns, blocks {names} have {self._width(names)}")
        self.terms.append(_Term(term.kind, names, term.M, term.m, term.weight * scale))

    def add_norm2(self, names: Sequence[str], M, m=None, weight: float = 1.0) -> None:
        self.add_cost(names, CostTerm.norm2(M, m, weight))

    def add_linear(self, names: Sequence[str], c, offset: float = 0.0, weight: float = 1.0) -> None:
        self.add_cost(names, CostTerm.linear(c, offset, weight))

    def _offsets(self) -> dict[str, int]:
        off, out = 0, {}
        for name, dim in self.blocks.items():
            out[name] = off
            off += dim
        return out

    def objective_value(self, values: dict[str, np.ndarray]) -> float:
        total = 0.0
        for t in self.terms:
            z = np.concatenate([values[n] for n in t.names])
            val = t.M @ z + t.m
            total += t.weight * (float(np.linalg.norm(val)) if t.kind == "norm2" else float(val[0]))
        return total

    def residual(self, values: dict[str, np.ndarray]) -> float:
        r = 0.0
        for rows in self.leq:
            z = np.concatenate([values[n] for n in rows.names])
            r = max(r, float(np.max(rows.M @ z - rows.v)))
        for rows in self.eq:
            z = np.concatenate([values[n] for n in rows.names])
            r = max(r, float(np.max(np.abs(rows.M @ z - rows.v))))
        return r


@dataclass
class ConicResult:
    status: str
    objective: float = float("inf")
    values: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _scatter(rows: list, cols: list, vals: list, r0: int, M: np.ndarray, names, offsets, blocks, sign: float) -> None:
    c0 = 0
    for name in names:
        dim = blocks[name]
        sub = M[:, c0 : c0 + dim]
        ri, ci = np.nonzero(sub)
        rows.append(ri + r0)
        cols.append(ci + offsets[name])
        vals.append(sign * sub[ri, ci])
        c0 += dim


def solve_conic(program: ConicProgram) -> ConicResult:
    """Solve ``program``; the objective is re-evaluated at the returned point."""
    offsets = program._offsets()
    nx = sum(program.blocks.values())
    norm_terms = [t for t in program.terms if t.kind == "norm2"]
    nvar = nx + len(norm_terms)

    q = np.zeros(nvar)
    for t in program.terms:
        if t.kind == "linear":
            c0 = 0
            for name in t.names:
                dim = program.blocks[name]
                q[offsets[name] : offsets[name] + dim] += t.weight * t.M[0, c0 : c0 + dim]
                c0 += dim

    rows: list = []
    cols: list = []
    vals: list = []
    rhs: list = []
    cones = []
    r0 = 0
    n_eq = 0
    for con in program.eq:
        _scatter(rows, cols, vals, r0, con.M, con.names, offsets, program.blocks, 1.0)
        rhs.append(con.v)
        r0 += len(con.v)
        n_eq += len(con.v)
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    n_leq = 0
    for con in program.leq:
        _scatter(rows, cols, vals, r0, con.M, con.names, offsets, program.blocks, 1.0)
        rhs.append(con.v)
        r0 += len(con.v)
        n_leq += len(con.v)
    if n_leq:
        cones.append(clarabel.NonnegativeConeT(n_leq))
    for k, t in enumerate(norm_terms):
        tcol = nx + k
        q[tcol] += t.weight
        rows.append(np.array([r0]))
        cols.append(np.array([tcol]))
        vals.append(np.array([-1.0]))
        rhs.append(np.zeros(1))
        _scatter(rows, cols, vals, r0 + 1, t.M, t.names, offsets, program.blocks, -1.0)
        rhs.append(t.m)
        cones.append(clarabel.SecondOrderConeT(1 + len(t.m)))
        r0 += 1 + len(t.m)
    if r0 == 0:
        # clarabel needs at least one row
        rows.append(np.array([0]))
        cols.append(np.array([0]))
        vals.append(np.array([0.0]))
        rhs.append(np.ones(1))
        cones.append(clarabel.NonnegativeConeT(1))
        r0 = 1

    A = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r0, max(nvar, 1))
    )
    b = np.concatenate(rhs)
    P = sp.csc_matrix((max(nvar, 1), max(nvar, 1)))
    if nvar == 0:
        q = np.zeros(1)

    settings = clarabel.DefaultSettings()
    for key, val in _SETTINGS.items():
        setattr(settings, key, val)
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    status = str(sol.status)

    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return ConicResult(INFEASIBLE)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return ConicResult(UNBOUNDED, -float("inf"))
    if status not in ("Solved", "AlmostSolved"):
        return ConicResult(NUMERICAL_FAILURE)

    x = np.asarray(sol.x)
    values = {name: x[offsets[name] : offsets[name] + dim].copy() for name, dim in program.blocks.items()}
    if program.residual(values) > RESIDUAL_TOL:
        return ConicResult(NUMERICAL_FAILURE)
    return ConicResult(OPTIMAL, program.objective_value(values), values)


# --- convex restriction ------------------------------------------------------


@dataclass
class TrajectoryResult:
    status: str
    points: list[np.ndarray] | None = None
    cost: float = float("inf")

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def restriction_program(instance: GcsInstance, path: Sequence[int], closed: bool) -> ConicProgram:
    """One block per occurrence, vertex/edge memberships, closure and costs."""
    prog = ConicProgram()
    names = [prog.add_block(f"x{i}", instance.vlist[v].dim) for i, v in enumerate(path)]
    charged = len(path) - 1 if closed else len(path)
    for i, v in enumerate(path):
        vert = instance.vlist[v]
        prog.add_set([names[i]], vert.set)
        if i < charged:
            for t in vert.costs:
                prog.add_cost([names[i]], t)
    for i in range(len(path) - 1):
        edge = instance.edge_at[(path[i], path[i + 1])]
        pair = [names[i], names[i + 1]]
        prog.add_set(pair, edge.set)
        for t in edge.costs:
            prog.add_cost(pair, t)
    if closed:
        vert = instance.vlist[path[0]]
        mask = list(vert.closure_mask)
        if mask:
            sel = np.eye(vert.dim)[mask]
            prog.add_eq([names[0], names[-1]], np.hstack([sel, -sel]), np.zeros(len(mask)))
    return prog


def optimal_trajectory(instance: GcsInstance, path: Sequence, closed: bool | None = None) -> TrajectoryResult:
    """Optimal trajectory conditioned on a fixed path (vertex revisits allowed)."""
    path = instance.path_indices(path)
    for a, b in zip(path, path[1:]):
        if not instance.has_edge(a, b):
            raise ValueError(f"({instance.ids[a]},{instance.ids[b]}) is not an edge")
    if closed is None:
        closed = is_closed(path)
    if closed and path[0] != path[-1]:
        raise ValueError("closed path must end at its first vertex")
    prog = restriction_program(instance, path, closed)
    res = solve_conic(prog)
    if not res.ok:
        return TrajectoryResult(res.status)
    pts = [res.values[f"x{i}"] for i in range(len(path))]
    return TrajectoryResult(OPTIMAL, pts, res.objective)


class TrajectoryCache:
    """Memoizes :func:`optimal_trajectory` by (vertex sequence, closed)."""

    def __init__(self, instance: GcsInstance):
        self.instance = instance
        self._store: dict[tuple[tuple[int, ...], bool], TrajectoryResult] = {}
        self._lock = threading.Lock()
        self.solves = 0
        self.hits = 0

    def __len__(self) -> int:
        return len(self._store)

    def clear(self) -> None:
        with self._lock:
            self._store.clear()

    def get(self, path: Sequence[int], closed: bool) -> TrajectoryResult:
        key = (tuple(path), bool(closed))
        with self._lock:
            hit = self._store.get(key)
            if hit is not None:
                self.hits += 1
                return hit
        res = optimal_trajectory(self.instance, key[0], key[1])
        with self._lock:
            self.solves += 1
            self._store.setdefault(key, res)
        return res


# --- triplet lower bounds --------------------------------------------------------


PREFIX_MARGIN = 1e-8


def prefix_lower_bound(instance: GcsInstance, path: Sequence[int]) -> float | None:
    """Cheapest cost share of an open path prefix; ``None`` if infeasible.

    Charges every vertex occurrence except the last, every edge in full
    except the last one at half.  The terms left out are exactly those a
    triplet bound centered at the last occurrence or later may charge, so the
    two can be added.
    """
    path = list(path)
    if len(path) < 2:
        return 0.0
    prog = ConicProgram()
    names = [prog.add_block(f"x{i}", instance.vlist[v].dim) for i, v in enumerate(path)]
    last = len(path) - 2
    for i, v in enumerate(path):
        vert = instance.vlist[v]
        prog.add_set([names[i]], vert.set)
        if i <= last:
            for t in vert.costs:
                prog.add_cost([names[i]], t)
    for i in range(len(path) - 1):
        edge = instance.edge_at[(path[i], path[i + 1])]
        pair = [names[i], names[i + 1]]
        prog.add_set(pair, edge.set)
        for t in edge.costs:
            prog.add_cost(pair, t, 0.5 if i == last else 1.0)
    res = solve_conic(prog)
    if res.status == INFEASIBLE:
        return None
    if not res.ok:
        raise RuntimeError(f"prefix bound failed: {res.status}")
    # shave solver tolerance so the bound never exceeds the exact minimum
    return max(0.0, res.objective - PREFIX_MARGIN * (1.0 + abs(res.objective)))


def triplet_program(
    instance: GcsInstance, u: int, v: int, w: int, keep_membership: bool = True, edge_scale: float = 0.5
) -> ConicProgram:
    prog = ConicProgram()
    vu, vv, vw = (instance.vlist[i] for i in (u, v, w))
    prog.add_block("xu", vu.dim)
    prog.add_block("xv", vv.dim)
    prog.add_block("xw", vw.dim)
    prog.add_set(["xv"], vv.set)
    if keep_membership:
        prog.add_set(["xu"], vu.set)
        prog.add_set(["xw"], vw.set)
    for t in vv.costs:
        prog.add_cost(["xv"], t)
    for pair, key in ((["xu", "xv"], (u, v)), (["xv", "xw"], (v, w))):
        edge = instance.edge_at[key]
        prog.add_set(pair, edge.set)
        for t in edge.costs:
            prog.add_cost(pair, t, edge_scale)
    return prog


def triplet_lower_bound(instance: GcsInstance, u, v, w, keep_membership: bool = True) -> float | None:
    """Lower bound for passing ``u -> v -> w``; ``None`` when the passage is infeasible.

    Charges half of each edge cost and the full cost of the center vertex, so
    that summing over the triplets of a closed path counts every edge and
    every vertex occurrence exactly once.
    """
    u, v, w = instance.path_indices((u, v, w))
    if not (instance.has_edge(u, v) and instance.has_edge(v, w)):
        raise ValueError("triplet requires edges (u,v) and (v,w)")
    res = solve_conic(triplet_program(instance, u, v, w, keep_membership))
    if res.status == INFEASIBLE:
        return None
    if not res.ok:
        raise RuntimeError(f"triplet ({u},{v},{w}) lower bound failed: {res.status}")
    return max(0.0, res.objective)


def edge_pair_lower_bound(instance: GcsInstance, u: int, v: int, charge_head: bool = True) -> float | None:
    """Minimum of edge cost (+ head vertex cost) over a single edge; ``None`` if infeasible."""
    prog = ConicProgram()
    vu, vv = instance.vlist[u], instance.vlist[v]
    prog.add_block("xu", vu.dim)
    prog.add_block("xv", vv.dim)
    prog.add_set(["xu"], vu.set)
    prog.add_set(["xv"], vv.set)
    edge = instance.edge_at[(u, v)]
    prog.add_set(["xu", "xv"], edge.set)
    for t in edge.costs:
        prog.add_cost(["xu", "xv"], t)
    if charge_head:
        for t in vv.costs:
            prog.add_cost(["xv"], t)
    res = solve_conic(prog)
    if res.status == INFEASIBLE:
        return None
    if not res.ok:
        raise RuntimeError(f"edge ({u},{v}) bound failed: {res.status}")
    return max(0.0, res.objective)


def vertex_lower_bound(instance: GcsInstance, v: int) -> float:
    prog = ConicProgram()
    vert = instance.vlist[v]
    prog.add_block("x", vert.dim)
    prog.add_set(["x"], vert.set)
    for t in vert.costs:
        prog.add_cost(["x"], t)
    res = solve_conic(prog)
    if not res.ok:
        raise RuntimeError(f"vertex {v} bound failed: {res.status}")
    return max(0.0, res.objective)


# --- set probes ------------------------------------------------------------------


def is_feasible(cset: ConvexSet) -> bool:
    prog = ConicProgram()
    prog.add_block("x", cset.dim)
    prog.add_set(["x"], cset)
    return solve_conic(prog).ok


def bounding_box(cset: ConvexSet) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Per-coordinate min and max over the set (+-inf if unbounded, ``None`` if empty)."""
    lo = np.empty(cset.dim)
    hi = np.empty(cset.dim)
    for i in range(cset.dim):
        for sign, out in ((1.0, lo), (-1.0, hi)):
            prog = ConicProgram()
            prog.add_block("x", cset.dim)
            prog.add_set(["x"], cset)
            c = np.zeros(cset.dim)
            c[i] = sign
            prog.add_linear(["x"], c)
            res = solve_conic(prog)
            if res.status == INFEASIBLE:
                return None, None
            if res.status == UNBOUNDED:
                out[i] = -sign * np.inf
            elif res.ok:
                out[i] = res.values["x"][i]
            else:
                raise RuntimeError(f"bounding box probe failed: {res.status}")
    return lo, hi


def min_linear_cost(term: CostTerm, sets: Sequence[ConvexSet], coupling: ConvexSet | None = None) -> float:
    """Minimum of a linear cost term over a product of sets (optionally coupled)."""
    prog = ConicProgram()
    names = [prog.add_block(f"z{i}", s.dim) for i, s in enumerate(sets)]
    for name, s in zip(names, sets):
        prog.add_set([name], s)
    if coupling is not None:
        prog.add_set(names, coupling)
    prog.add_cost(names, term)
    res = solve_conic(prog)
    if res.status == UNBOUNDED:
        return -float("inf")
    if not res.ok:
        return float("inf")
    return res.objective


def chebyshev_center(cset: ConvexSet) -> tuple[np.ndarray, float]:
    """Center and radius of the largest ball inscribed in ``cset``.

    Equalities restrict the ball to the affine hull.  Among all centers the
    one closest to the bounding-box midpoint is returned, which makes the
    result unique and symmetric for boxes and products of boxes.
    """
    lo, hi = bounding_box(cset)
    if lo is None:
        raise ValueError("empty set")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("unbounded set")
    mid = 0.5 * (lo + hi)
    if len(cset.d):
        basis = scipy.linalg.null_space(cset.C)
    else:
        basis = np.eye(cset.dim)
    if basis.shape[1] == 0 or len(cset.b) == 0:
        prog = ConicProgram()
        prog.add_block("x", cset.dim)
        prog.add_set(["x"], cset)
        prog.add_norm2(["x"], np.eye(cset.dim), -mid)
        res = solve_conic(prog)
        if not res.ok:
            raise RuntimeError(f"chebyshev center failed: {res.status}")
        return res.values["x"], 0.0
    norms = np.linalg.norm(cset.A @ basis, axis=1)

    prog = ConicProgram()
    prog.add_block("x", cset.dim)
    prog.add_block("r", 1)
    prog.add_leq(["x", "r"], np.hstack([cset.A, norms[:, None]]), cset.b)
    prog.add_eq(["x"], cset.C, cset.d)
    prog.add_leq(["r"], [[-1.0]], [0.0])
    prog.add_linear(["r"], [-1.0])
    res = solve_conic(prog)
    if res.status == UNBOUNDED:
        raise ValueError("unbounded set")
    if not res.ok:
        raise RuntimeError(f"chebyshev center failed: {res.status}")
    radius = max(0.0, float(res.values["r"][0]))

    prog = ConicProgram()
    prog.add_block("x", cset.dim)
    prog.add_leq(["x"], cset.A, cset.b - max(radius - 1e-9, 0.0) * norms)
    prog.add_eq(["x"], cset.C, cset.d)
    prog.add_norm2(["x"], np.eye(cset.dim), -mid)
    res2 = solve_conic(prog)
    center = res2.values["x"] if res2.ok else res.values["x"]
    return center, radius
