"""Graph-of-convex-sets instances, cost evaluation and the instance file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

COST_TOL = 1e-6


class InstanceFormatError(ValueError):
    """Raised when an instance document does not match the schema."""


def _as_matrix(rows, ncols: int) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.size == 0:
        return np.zeros((0, ncols))
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr


def _as_vector(vals) -> np.ndarray:
    return np.asarray(vals, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class ConvexSet:
    """Polyhedron ``{x : A x <= b, C x = d}`` in R^dim."""

    dim: int
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    d: np.ndarray

    @classmethod
    def from_constraints(cls, dim, A=None, b=None, C=None, d=None) -> "ConvexSet":
        A = _as_matrix([] if A is None else A, dim)
        C = _as_matrix([] if C is None else C, dim)
        return cls(int(dim), A, _as_vector([] if b is None else b), C, _as_vector([] if d is None else d))

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "ConvexSet":
        lo, hi = _as_vector(lo), _as_vector(hi)
        n = len(lo)
        eye = np.eye(n)
        return cls.from_constraints(n, np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def point(cls, p: Sequence[float]) -> "ConvexSet":
        p = _as_vector(p)
        return cls.from_constraints(len(p), C=np.eye(len(p)), d=p)

    @classmethod
    def unconstrained(cls, dim: int) -> "ConvexSet":
        return cls.from_constraints(dim)

    def shape_errors(self) -> list[str]:
        errs = []
        if self.dim <= 0:
            errs.append("dim must be positive")
        if self.A.ndim != 2 or self.A.shape[1] != self.dim:
            errs.append(f"A has {self.A.shape} but dim={self.dim}")
        elif self.A.shape[0] != len(self.b):
            errs.append(f"A has {self.A.shape[0]} rows but b has length {len(self.b)}")
        if self.C.ndim != 2 or self.C.shape[1] != self.dim:
            errs.append(f"C has {self.C.shape} but dim={self.dim}")
        elif self.C.shape[0] != len(self.d):
            errs.append(f"C has {self.C.shape[0]} rows but d has length {len(self.d)}")
        return errs

    def residual(self, x) -> float:
        """Largest constraint violation at ``x`` (0 when feasible)."""
        x = _as_vector(x)
        r = 0.0
        if len(self.b):
            r = max(r, float(np.max(self.A @ x - self.b)))
        if len(self.d):
            r = max(r, float(np.max(np.abs(self.C @ x - self.d))))
        return r

    def contains(self, x, tol: float = COST_TOL) -> bool:
        return self.residual(x) <= tol

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConvexSet):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.C, other.C)
            and np.array_equal(self.d, other.d)
        )


@dataclass(frozen=True, eq=False)
class CostTerm:
    """``weight * ||M z + m||_2`` (norm2) or ``weight * (M z + m)`` (linear, one row)."""

    kind: str
    M: np.ndarray
    m: np.ndarray
    weight: float = 1.0

    @classmethod
    def norm2(cls, M, m=None, weight: float = 1.0) -> "CostTerm":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        m = np.zeros(M.shape[0]) if m is None else _as_vector(m)
        return cls("norm2", M, m, float(weight))

    @classmethod
    def linear(cls, c, offset: float = 0.0, weight: float = 1.0) -> "CostTerm":
        M = np.asarray(c, dtype=float).reshape(1, -1)
        return cls("linear", M, np.array([float(offset)]), float(weight))

    @property
    def ncols(self) -> int:
        return self.M.shape[1]

    def shape_errors(self, ncols: int) -> list[str]:
        errs = []
        if self.kind not in ("norm2", "linear"):
            errs.append(f"unknown cost kind {self.kind!r}")
        if self.M.ndim != 2 or self.M.shape[1] != ncols:
            errs.append(f"cost matrix has {self.M.shape}, expected {ncols} columns")
        elif self.M.shape[0] != len(self.m):
            errs.append("cost matrix rows do not match offset length")
        if self.kind == "linear" and self.M.shape[0] != 1:
            errs.append("linear cost must have a single row")
        if not self.weight >= 0:
            errs.append("cost weight must be nonnegative")
        return errs

    def evaluate(self, z) -> float:
        val = self.M @ _as_vector(z) + self.m
        if self.kind == "norm2":
            return self.weight * float(np.linalg.norm(val))
        return self.weight * float(val[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CostTerm):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.weight == other.weight
            and np.array_equal(self.M, other.M)
            and np.array_equal(self.m, other.m)
        )


@dataclass(eq=False)
class Vertex:
    set: ConvexSet
    costs: tuple[CostTerm, ...] = ()
    closure_mask: tuple[int, ...] | None = None

    def __post_init__(self):
        self.costs = tuple(self.costs)
        if self.closure_mask is None:
            self.closure_mask = tuple(range(self.set.dim))
        self.closure_mask = tuple(int(i) for i in self.closure_mask)

    @property
    def dim(self) -> int:
        return self.set.dim

    def cost(self, x) -> float:
        return sum(t.evaluate(x) for t in self.costs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vertex):
            return NotImplemented
        return self.set == other.set and self.costs == other.costs and self.closure_mask == other.closure_mask


@dataclass(eq=False)
class Edge:
    """Coupling set and costs over the concatenated vector ``(x_u, x_v)``."""

    set: ConvexSet
    costs: tuple[CostTerm, ...] = ()

    def __post_init__(self):
        self.costs = tuple(self.costs)

    def cost(self, xu, xv) -> float:
        z = np.concatenate([_as_vector(xu), _as_vector(xv)])
        return sum(t.evaluate(z) for t in self.costs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Edge):
            return NotImplemented
        return self.set == other.set and self.costs == other.costs


@dataclass(eq=False)
class GcsInstance:
    """A directed graph of convex sets.

    Vertex ids are strings; algorithms work on integer indices given by the
    insertion order of ``vertices``.  ``meta`` carries optional layout data
    (family, regions) used by generators and plotting.
    """

    vertices: dict[str, Vertex]
    edges: dict[tuple[str, str], Edge]
    name: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.ids: list[str] = list(self.vertices)
        self.index: dict[str, int] = {v: i for i, v in enumerate(self.ids)}
        n = len(self.ids)
        self.out_nbrs: list[list[int]] = [[] for _ in range(n)]
        self.in_nbrs: list[list[int]] = [[] for _ in range(n)]
        self.edge_at: dict[tuple[int, int], Edge] = {}
        for (u, v), e in self.edges.items():
            if u not in self.index or v not in self.index:
                continue
            i, j = self.index[u], self.index[v]
            self.out_nbrs[i].append(j)
            self.in_nbrs[j].append(i)
            self.edge_at[(i, j)] = e
        for lst in self.out_nbrs + self.in_nbrs:
            lst.sort()
        self.vlist: list[Vertex] = [self.vertices[v] for v in self.ids]

    @property
    def n(self) -> int:
        return len(self.ids)

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edge_at

    def is_complete(self) -> bool:
        return len(self.edge_at) == self.n * (self.n - 1)

    def path_ids(self, path: Sequence[int]) -> list[str]:
        return [self.ids[i] for i in path]

    def path_indices(self, path: Sequence) -> tuple[int, ...]:
        return tuple(p if isinstance(p, (int, np.integer)) else self.index[p] for p in path)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GcsInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.ids == other.ids
            and all(self.vertices[v] == other.vertices[v] for v in self.ids)
            and list(self.edges) == list(other.edges)
            and all(self.edges[k] == other.edges[k] for k in self.edges)
            and self.meta == other.meta
        )


def validate_instance(instance: GcsInstance, check_sets: bool = True) -> list[str]:
    """Return a list of human-readable violations (empty when valid)."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    report: list[str] = []
    ids = set(instance.vertices)
    for vid, vert in instance.vertices.items():
        for e in vert.set.shape_errors():
            report.append(f"vertex {vid}: {e}")
        for t in vert.costs:
            for e in t.shape_errors(vert.dim):
                report.append(f"vertex {vid}: {e}")
        for i in vert.closure_mask:
            if not 0 <= i < vert.dim:
                report.append(f"vertex {vid}: closure_mask index {i} out of range")
    for (u, v), edge in instance.edges.items():
        if u not in ids or v not in ids:
            report.append(f"edge ({u},{v}): unknown endpoint")
            continue
        if u == v:
            report.append(f"edge ({u},{v}): self-loop")
            continue
        dim = instance.vertices[u].dim + instance.vertices[v].dim
        for e in edge.set.shape_errors():
            report.append(f"edge ({u},{v}): {e}")
        if edge.set.dim != dim:
            report.append(f"edge ({u},{v}): set dim {edge.set.dim} != {dim}")
        for t in edge.costs:
            for e in t.shape_errors(dim):
                report.append(f"edge ({u},{v}): {e}")
    if report:
        return report

    if instance.n > 0:
        rows = [i for i, j in instance.edge_at]
        cols = [j for i, j in instance.edge_at]
        adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(instance.n, instance.n))
        ncomp, _ = connected_components(adj, directed=True, connection="strong")
        if ncomp > 1:
            report.append(f"graph is not strongly connected ({ncomp} components)")

    if check_sets:
        from .conic import bounding_box, min_linear_cost

        for vid, vert in instance.vertices.items():
            lo, hi = bounding_box(vert.set)
            if lo is None:
                report.append(f"vertex {vid}: empty set")
                continue
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                report.append(f"vertex {vid}: unbounded set")
                continue
            for t in vert.costs:
                if t.kind == "linear" and min_linear_cost(t, [vert.set]) < -COST_TOL:
                    report.append(f"vertex {vid}: linear cost can be negative")
        for (u, v), edge in instance.edges.items():
            sets = [instance.vertices[u].set, instance.vertices[v].set]
            for t in edge.costs:
                if t.kind == "linear" and min_linear_cost(t, sets, edge.set) < -COST_TOL:
                    report.append(f"edge ({u},{v}): linear cost can be negative")
    return report


def is_closed(path: Sequence) -> bool:
    return len(path) > 1 and path[0] == path[-1]


def trajectory_cost(instance: GcsInstance, path: Sequence, traj: Sequence, closed: bool | None = None) -> float:
    """Edge costs over consecutive occurrences plus vertex costs per occurrence.

    The repeated last occurrence of a closed path is not charged a vertex cost.
    ``closed`` defaults to ``path[0] == path[-1]``.
    """
    path = instance.path_indices(path)
    if len(traj) != len(path):
        raise ValueError(f"trajectory has {len(traj)} points for a path of length {len(path)}")
    pts = [_as_vector(x) for x in traj]
    for i, (v, x) in enumerate(zip(path, pts)):
        if len(x) != instance.vlist[v].dim:
            raise ValueError(f"point {i} has dimension {len(x)}, vertex {instance.ids[v]} has {instance.vlist[v].dim}")
    if closed is None:
        closed = is_closed(path)
    charged = len(path) - 1 if closed else len(path)
    total = sum(instance.vlist[path[i]].cost(pts[i]) for i in range(charged))
    for i in range(len(path) - 1):
        edge = instance.edge_at.get((path[i], path[i + 1]))
        if edge is None:
            raise ValueError(f"({instance.ids[path[i]]},{instance.ids[path[i + 1]]}) is not an edge")
        total += edge.cost(pts[i], pts[i + 1])
    return float(total)


def trajectory_residual(instance: GcsInstance, path: Sequence, traj: Sequence, closed: bool | None = None) -> float:
    """Largest violation of vertex, edge and closure constraints along a trajectory."""
    path = instance.path_indices(path)
    pts = [_as_vector(x) for x in traj]
    r = max(instance.vlist[v].set.residual(x) for v, x in zip(path, pts))
    for i in range(len(path) - 1):
        edge = instance.edge_at[(path[i], path[i + 1])]
        r = max(r, edge.set.residual(np.concatenate([pts[i], pts[i + 1]])))
    if closed is None:
        closed = is_closed(path)
    if closed:
        mask = list(instance.vlist[path[0]].closure_mask)
        if mask:
            r = max(r, float(np.max(np.abs(pts[0][mask] - pts[-1][mask]))))
    return r


# --- file format -----------------------------------------------------------


def _matrix_json(M: np.ndarray) -> list:
    return [] if M.size == 0 else M.tolist()


def _costs_json(costs) -> list:
    return [{"kind": t.kind, "M": _matrix_json(t.M), "m": t.m.tolist(), "weight": t.weight} for t in costs]


def instance_to_dict(instance: GcsInstance) -> dict:
    doc: dict[str, Any] = {"name": instance.name, "vertices": [], "edges": []}
    for vid in instance.ids:
        vert = instance.vertices[vid]
        s = vert.set
        doc["vertices"].append(
            {
                "id": vid,
                "dim": s.dim,
                "A": _matrix_json(s.A),
                "b": s.b.tolist(),
                "C": _matrix_json(s.C),
                "d": s.d.tolist(),
                "cost_terms": _costs_json(vert.costs),
                "closure_mask": list(vert.closure_mask),
            }
        )
    for (u, v), edge in instance.edges.items():
        s = edge.set
        doc["edges"].append(
            {
                "from": u,
                "to": v,
                "A": _matrix_json(s.A),
                "b": s.b.tolist(),
                "C": _matrix_json(s.C),
                "d": s.d.tolist(),
                "cost_terms": _costs_json(edge.costs),
            }
        )
    if instance.meta:
        doc["meta"] = instance.meta
    return doc


def serialize_instance(instance: GcsInstance) -> str:
    # float repr is the shortest string that round-trips bit-exactly
    return json.dumps(instance_to_dict(instance), indent=1)


def _field(obj: dict, key: str, where: str, types=None):
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    if key not in obj:
        raise InstanceFormatError(f"{where}: missing field '{key}'")
    val = obj[key]
    if types is not None and not isinstance(val, types):
        raise InstanceFormatError(f"{where}.{key}: expected {getattr(types, '__name__', types)}")
    return val


def _parse_vector(val, where: str) -> np.ndarray:
    if not isinstance(val, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in val):
        raise InstanceFormatError(f"{where}: expected a list of numbers")
    return np.asarray(val, dtype=float)


def _parse_matrix(val, ncols: int, where: str) -> np.ndarray:
    if not isinstance(val, list):
        raise InstanceFormatError(f"{where}: expected a list of rows")
    if not val:
        return np.zeros((0, ncols))
    if not all(isinstance(r, list) for r in val):
        raise InstanceFormatError(f"{where}: expected a list of rows")
    lens = {len(r) for r in val}
    if len(lens) != 1:
        raise InstanceFormatError(f"{where}: ragged matrix")
    rows = [_parse_vector(r, f"{where}[{i}]") for i, r in enumerate(val)]
    M = np.vstack(rows)
    if M.shape[1] != ncols:
        raise InstanceFormatError(f"{where}: expected {ncols} columns, got {M.shape[1]}")
    return M


def _parse_set(obj: dict, dim: int, where: str) -> ConvexSet:
    A = _parse_matrix(_field(obj, "A", where), dim, f"{where}.A")
    b = _parse_vector(_field(obj, "b", where), f"{where}.b")
    C = _parse_matrix(_field(obj, "C", where), dim, f"{where}.C")
    d = _parse_vector(_field(obj, "d", where), f"{where}.d")
    if len(b) != A.shape[0]:
        raise InstanceFormatError(f"{where}.b: length {len(b)} does not match {A.shape[0]} rows of A")
    if len(d) != C.shape[0]:
        raise InstanceFormatError(f"{where}.d: length {len(d)} does not match {C.shape[0]} rows of C")
    return ConvexSet(dim, A, b, C, d)


def _parse_costs(val, ncols: int, where: str) -> tuple[CostTerm, ...]:
    if not isinstance(val, list):
        raise InstanceFormatError(f"{where}: expected a list")
    out = []
    for i, t in enumerate(val):
        w = f"{where}[{i}]"
        kind = _field(t, "kind", w, str)
        if kind not in ("norm2", "linear"):
            raise InstanceFormatError(f"{w}.kind: must be 'norm2' or 'linear'")
        M = _parse_matrix(_field(t, "M", w), ncols, f"{w}.M")
        m = _parse_vector(_field(t, "m", w), f"{w}.m")
        weight = _field(t, "weight", w, (int, float))
        if M.shape[0] != len(m):
            raise InstanceFormatError(f"{w}.m: length does not match rows of M")
        if kind == "linear" and M.shape[0] != 1:
            raise InstanceFormatError(f"{w}.M: linear cost must have exactly one row")
        if weight < 0:
            raise InstanceFormatError(f"{w}.weight: must be nonnegative")
        out.append(CostTerm(kind, M, m, float(weight)))
    return tuple(out)


def instance_from_dict(doc: dict) -> GcsInstance:
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance: expected a JSON object")
    verts_doc = _field(doc, "vertices", "instance", list)
    edges_doc = _field(doc, "edges", "instance", list)
    name = doc.get("name", "")
    vertices: dict[str, Vertex] = {}
    for i, vd in enumerate(verts_doc):
        w = f"vertices[{i}]"
        vid = _field(vd, "id", w, str)
        if vid in vertices:
            raise InstanceFormatError(f"{w}.id: duplicate vertex id {vid!r}")
        dim = _field(vd, "dim", w, int)
        if dim <= 0:
            raise InstanceFormatError(f"{w}.dim: must be positive")
        s = _parse_set(vd, dim, w)
        costs = _parse_costs(vd.get("cost_terms", []), dim, f"{w}.cost_terms")
        mask = vd.get("closure_mask")
        if mask is not None and not (isinstance(mask, list) and all(isinstance(k, int) for k in mask)):
            raise InstanceFormatError(f"{w}.closure_mask: expected a list of integers")
        vertices[vid] = Vertex(s, costs, None if mask is None else tuple(mask))
    edges: dict[tuple[str, str], Edge] = {}
    for i, ed in enumerate(edges_doc):
        w = f"edges[{i}]"
        u = _field(ed, "from", w, str)
        v = _field(ed, "to", w, str)
        if (u, v) in edges:
            raise InstanceFormatError(f"{w}: duplicate edge ({u},{v})")
        if u not in vertices or v not in vertices:
            raise InstanceFormatError(f"{w}: unknown endpoint in ({u},{v})")
        dim = vertices[u].dim + vertices[v].dim
        s = _parse_set(ed, dim, w)
        costs = _parse_costs(ed.get("cost_terms", []), dim, f"{w}.cost_terms")
        edges[(u, v)] = Edge(s, costs)
    return GcsInstance(vertices, edges, name=name, meta=doc.get("meta", {}) or {})


def parse_instance(text: str) -> GcsInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(doc)


def load_instance(path) -> GcsInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def save_instance(instance: GcsInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_instance(instance))
        fh.write("\n")
