"""Seeded instance generators on a square grid: Point-, Linear- and Bezier-GCS."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ConvexSet, CostTerm, Edge, GcsInstance, Vertex

GRID = 5
DELTA_MIN = 0.01
SPEED_LIMIT = 1.0
T_MAX = 100.0
HALF_WIDTH = (0.6, 1.4)
MIN_OVERLAP = 0.05
MAX_ATTEMPTS = 2000

POINT_SIZES = (5, 25)
EDGE_SIZES = (10, 50)


class GenerationError(RuntimeError):
    pass


def _vid(i: int, n: int) -> str:
    return f"v{i:0{len(str(n - 1))}d}"


def point_instance(points: Sequence[Sequence[float]], edges: Sequence[tuple[int, int]] | None = None, name: str = "") -> GcsInstance:
    """Singleton sets with Euclidean edge costs; complete digraph unless ``edges`` is given."""
    points = [np.asarray(p, dtype=float) for p in points]
    n = len(points)
    dim = len(points[0])
    ids = [_vid(i, n) for i in range(n)]
    vertices = {ids[i]: Vertex(ConvexSet.point(p)) for i, p in enumerate(points)}
    if edges is None:
        edges = [(i, j) for i in range(n) for j in range(n) if i != j]
    diff = np.hstack([-np.eye(dim), np.eye(dim)])
    out = {}
    for i, j in edges:
        out[(ids[i], ids[j])] = Edge(ConvexSet.unconstrained(2 * dim), (CostTerm.norm2(diff),))
    meta = {"family": "point", "points": [p.tolist() for p in points]}
    return GcsInstance(vertices, out, name=name, meta=meta)


def gen_point(N: int, seed: int, grid: int = GRID) -> GcsInstance:
    if N < 3:
        raise ValueError("Point-GCS needs at least 3 vertices")
    if N > grid * grid:
        raise ValueError(f"N={N} exceeds the {grid * grid} grid intersections")
    rng = np.random.default_rng(seed)
    cells = rng.choice(grid * grid, size=N, replace=False)
    pts = np.stack([cells % grid, cells // grid], axis=1).astype(float)
    pts += rng.uniform(-0.2, 0.2, size=pts.shape)
    inst = point_instance(pts, name=f"point-N{N}-s{seed}")
    inst.meta["grid"] = grid
    return inst


# --- region layouts -----------------------------------------------------------


@dataclass
class GridLayout:
    grid: int
    regions: list[tuple[np.ndarray, np.ndarray]]
    overlap: list[tuple[int, int]]
    edges: list[tuple[int, int]]


def _overlaps(r1, r2) -> bool:
    lo = np.maximum(r1[0], r2[0])
    hi = np.minimum(r1[1], r2[1])
    return bool(np.all(hi - lo > MIN_OVERLAP))


def _connected(n: int, pairs: list[tuple[int, int]]) -> bool:
    seen, stack = {0}, [0]
    nbrs = {i: [] for i in range(n)}
    for i, j in pairs:
        nbrs[i].append(j)
        nbrs[j].append(i)
    while stack:
        for j in nbrs[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def sample_layout(M: int, seed: int, grid: int = GRID) -> GridLayout:
    """Rectangles around distinct grid intersections whose overlap graph has ``M`` directed edges.

    Regions are added one at a time; the layout is accepted as soon as the
    overlap pairs number exactly ``M / 2`` and connect every region, and is
    restarted once the count overshoots.  Every overlapping pair becomes an
    edge in both directions.
    """
    if M < 4 or M % 2:
        raise ValueError("M must be an even number >= 4 (overlap graphs are symmetric)")
    need = M // 2
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        cells: list[int] = []
        regions: list[tuple[np.ndarray, np.ndarray]] = []
        overlap: list[tuple[int, int]] = []
        while len(cells) < grid * grid:
            free = [c for c in range(grid * grid) if c not in cells]
            c = free[int(rng.integers(len(free)))]
            center = np.array([c % grid, c // grid], dtype=float)
            h = rng.uniform(*HALF_WIDTH, size=2)
            reg = (np.clip(center - h, 0, grid - 1), np.clip(center + h, 0, grid - 1))
            k = len(regions)
            overlap += [(i, k) for i in range(k) if _overlaps(regions[i], reg)]
            cells.append(c)
            regions.append(reg)
            if len(overlap) > need:
                break
            if len(overlap) == need and len(regions) >= 3 and _connected(len(regions), overlap):
                edges = sorted(e for i, j in overlap for e in ((i, j), (j, i)))
                return GridLayout(grid, regions, overlap, edges)
    raise GenerationError(f"no connected layout with M={M} after {MAX_ATTEMPTS} attempts (seed={seed})")


def _region_meta(layout: GridLayout, ids: list[str]) -> dict:
    return {ids[i]: [*map(float, lo), *map(float, hi)] for i, (lo, hi) in enumerate(layout.regions)}


def gen_linear(M: int, seed: int, grid: int = GRID) -> GcsInstance:
    """Each vertex holds a segment ``(a_v, b_v)`` inside its region; edges glue ``b_u = a_v``."""
    layout = sample_layout(M, seed, grid)
    n = len(layout.regions)
    ids = [_vid(i, n) for i in range(n)]
    length = CostTerm.norm2(np.hstack([-np.eye(2), np.eye(2)]))
    vertices = {}
    for i, (lo, hi) in enumerate(layout.regions):
        vertices[ids[i]] = Vertex(ConvexSet.box(np.tile(lo, 2), np.tile(hi, 2)), (length,))
    glue = np.zeros((2, 8))
    glue[:, 2:4] = np.eye(2)
    glue[:, 4:6] = -np.eye(2)
    edges = {(ids[i], ids[j]): Edge(ConvexSet.from_constraints(8, C=glue, d=np.zeros(2))) for i, j in layout.edges}
    meta = {"family": "linear", "grid": grid, "regions": _region_meta(layout, ids)}
    return GcsInstance(vertices, edges, name=f"linear-M{M}-s{seed}", meta=meta)


# Bezier vertex layout: 5 spatial control points (x, y) then 5 time control points.
N_CTRL = 5
BEZIER_DIM = 3 * N_CTRL
SPATIAL = list(range(2 * N_CTRL))


def _p(k: int) -> slice:
    return slice(2 * k, 2 * k + 2)


def _t(k: int) -> int:
    return 2 * N_CTRL + k


def bezier_vertex_set(lo, hi, delta_min: float = DELTA_MIN, speed_limit: float | None = SPEED_LIMIT, t_max: float = T_MAX) -> ConvexSet:
    A, b = [], []
    for k in range(N_CTRL):
        for c in range(2):
            row = np.zeros(BEZIER_DIM)
            row[2 * k + c] = 1.0
            A.append(row)
            b.append(hi[c])
            A.append(-row)
            b.append(-lo[c])
    for k in range(N_CTRL - 1):
        row = np.zeros(BEZIER_DIM)
        row[_t(k)] = 1.0
        row[_t(k + 1)] = -1.0
        A.append(row)
        b.append(-delta_min)
        if speed_limit is not None:
            # |P_{k+1} - P_k| <= v (t_{k+1} - t_k) per axis bounds the hodograph ratio
            for c in range(2):
                for sign in (1.0, -1.0):
                    r = np.zeros(BEZIER_DIM)
                    r[2 * (k + 1) + c] = sign
                    r[2 * k + c] = -sign
                    r[_t(k + 1)] = -speed_limit
                    r[_t(k)] = speed_limit
                    A.append(r)
                    b.append(0.0)
    row = np.zeros(BEZIER_DIM)
    row[_t(N_CTRL - 1)] = 1.0
    A.append(row)
    b.append(t_max)
    C = np.zeros((1, BEZIER_DIM))
    C[0, _t(0)] = 1.0
    return ConvexSet.from_constraints(BEZIER_DIM, np.array(A), np.array(b), C, np.zeros(1))


def bezier_edge_set(continuity: int) -> ConvexSet:
    rows = []
    for c in range(2):
        r = np.zeros(2 * BEZIER_DIM)
        r[2 * (N_CTRL - 1) + c] = 1.0
        r[BEZIER_DIM + c] = -1.0
        rows.append(r)
    if continuity >= 1:
        for c in range(2):
            r = np.zeros(2 * BEZIER_DIM)
            r[2 * (N_CTRL - 1) + c] = 1.0
            r[2 * (N_CTRL - 2) + c] = -1.0
            r[BEZIER_DIM + 2 + c] = -1.0
            r[BEZIER_DIM + c] = 1.0
            rows.append(r)
    return ConvexSet.from_constraints(2 * BEZIER_DIM, C=np.array(rows), d=np.zeros(len(rows)))


def gen_bezier(
    M: int,
    seed: int,
    continuity: int = 0,
    grid: int = GRID,
    speed_limit: float | None = SPEED_LIMIT,
) -> GcsInstance:
    """Degree-4 spatial and time Bezier pieces per region; cost is the total duration."""
    if continuity not in (0, 1):
        raise ValueError("continuity must be 0 or 1")
    layout = sample_layout(M, seed, grid)
    n = len(layout.regions)
    ids = [_vid(i, n) for i in range(n)]
    duration = np.zeros(BEZIER_DIM)
    duration[_t(N_CTRL - 1)] = 1.0
    vertices = {
        ids[i]: Vertex(bezier_vertex_set(lo, hi, speed_limit=speed_limit), (CostTerm.linear(duration),), tuple(SPATIAL))
        for i, (lo, hi) in enumerate(layout.regions)
    }
    eset = bezier_edge_set(continuity)
    edges = {(ids[i], ids[j]): Edge(eset) for i, j in layout.edges}
    meta = {
        "family": "bezier",
        "grid": grid,
        "continuity": continuity,
        "delta_min": DELTA_MIN,
        "speed_limit": speed_limit,
        "regions": _region_meta(layout, ids),
    }
    return GcsInstance(vertices, edges, name=f"bezier{continuity}-M{M}-s{seed}", meta=meta)


def bezier_curve(ctrl: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Evaluate a Bezier curve with control points ``ctrl`` (k x d) at parameters ``s``."""
    from math import comb

    ctrl = np.asarray(ctrl, dtype=float)
    deg = len(ctrl) - 1
    s = np.asarray(s, dtype=float)[:, None]
    basis = np.hstack([comb(deg, i) * s**i * (1 - s) ** (deg - i) for i in range(deg + 1)])
    return basis @ ctrl


def bezier_pieces(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a Bezier vertex value into spatial (5x2) and time (5,) control points."""
    x = np.asarray(x, dtype=float)
    return x[: 2 * N_CTRL].reshape(N_CTRL, 2), x[2 * N_CTRL :]


def generate(family: str, size: int, seed: int, continuity: int = 0) -> GcsInstance:
    if family == "point":
        return gen_point(size, seed)
    if family == "linear":
        return gen_linear(size, seed)
    if family == "bezier":
        return gen_bezier(size, seed, continuity)
    raise ValueError(f"unknown family {family!r}")
