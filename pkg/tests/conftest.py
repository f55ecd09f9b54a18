import math

import numpy as np
import pytest

from gcs_tsp.model import ConvexSet, CostTerm, Edge, GcsInstance, Vertex
from gcs_tsp.problems import point_instance

SQRT2 = math.sqrt(2.0)
SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


@pytest.fixture
def triangle():
    return point_instance([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], name="triangle")


@pytest.fixture
def square():
    # complete digraph: perimeter plus both diagonals
    return point_instance(SQUARE, name="square")


@pytest.fixture
def square_perimeter():
    ring = [(i, (i + 1) % 4) for i in range(4)] + [((i + 1) % 4, i) for i in range(4)]
    return point_instance(SQUARE, edges=ring, name="square-perimeter")


def box_instance(boxes, edges, name="boxes"):
    """2D boxes with unconstrained product edges and Euclidean edge costs."""
    diff = np.hstack([-np.eye(2), np.eye(2)])
    ids = [f"b{i}" for i in range(len(boxes))]
    verts = {ids[i]: Vertex(ConvexSet.box(lo, hi)) for i, (lo, hi) in enumerate(boxes)}
    out = {(ids[i], ids[j]): Edge(ConvexSet.unconstrained(4), (CostTerm.norm2(diff),)) for i, j in edges}
    return GcsInstance(verts, out, name=name)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"CRITERION {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
