import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcs_tsp.conic import (
    INFEASIBLE,
    ConicProgram,
    TrajectoryCache,
    chebyshev_center,
    optimal_trajectory,
    prefix_lower_bound,
    solve_conic,
    triplet_lower_bound,
    triplet_program,
)
from gcs_tsp.model import ConvexSet, CostTerm, Edge, GcsInstance, Vertex, trajectory_cost, trajectory_residual
from gcs_tsp.problems import generate

from conftest import SQRT2, box_instance


def test_feasible_target_norm():
    p = ConicProgram()
    p.add_block("x", 2)
    p.add_set(["x"], ConvexSet.box([0, 0], [1, 1]))
    p.add_norm2(["x"], np.eye(2), [-1.0, -1.0])
    res = solve_conic(p)
    assert res.ok
    assert res.objective == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(res.values["x"], [1, 1], atol=1e-5)


def test_corner_norm():
    p = ConicProgram()
    p.add_block("x", 2)
    p.add_leq(["x"], -np.eye(2), [-3.0, -4.0])
    p.add_norm2(["x"], np.eye(2))
    res = solve_conic(p)
    assert res.objective == pytest.approx(5.0, abs=1e-6)


def test_empty_set_is_infeasible():
    p = ConicProgram()
    p.add_block("x", 1)
    p.add_leq(["x"], [[1.0]], [0.0])
    p.add_leq(["x"], [[-1.0]], [-1.0])
    assert solve_conic(p).status == INFEASIBLE


def test_undeclared_block_rejected():
    p = ConicProgram()
    p.add_block("x", 2)
    with pytest.raises(ValueError):
        p.add_leq(["y"], np.eye(2), [0, 0])
    with pytest.raises(ValueError):
        p.add_leq(["x"], np.eye(3), [0, 0, 0])


def test_triangle_restriction(triangle):
    res = optimal_trajectory(triangle, (0, 1, 2, 0), True)
    assert res.ok
    assert res.cost == pytest.approx(2 + SQRT2, abs=1e-6)
    assert len(res.points) == 4


def test_overlapping_boxes_cost_zero():
    inst = box_instance([([0, 0], [1, 1]), ([0, 0], [1, 1])], [(0, 1)])
    res = optimal_trajectory(inst, (0, 1), False)
    assert res.cost == pytest.approx(0.0, abs=1e-6)


def test_revisit_gets_separate_occurrences():
    # entering w from a pins it to (0,0); entering from b pins it to (1,1)
    sq = ConvexSet.box([0, 0], [1, 1])
    diff = (CostTerm.norm2(np.hstack([-np.eye(2), np.eye(2)])),)
    pin = lambda p: ConvexSet.from_constraints(4, C=np.hstack([np.zeros((2, 2)), np.eye(2)]), d=p)
    verts = {k: Vertex(sq) for k in ("a", "w", "b", "c")}
    edges = {
        ("a", "w"): Edge(pin([0.0, 0.0]), diff),
        ("w", "b"): Edge(ConvexSet.unconstrained(4), diff),
        ("b", "w"): Edge(pin([1.0, 1.0]), diff),
        ("w", "c"): Edge(ConvexSet.unconstrained(4), diff),
    }
    inst = GcsInstance(verts, edges)
    path = inst.path_indices(("a", "w", "b", "w", "c"))
    res = optimal_trajectory(inst, path, False)
    assert res.ok and len(res.points) == len(path)
    assert np.allclose(res.points[1], [0, 0], atol=1e-6)
    assert np.allclose(res.points[3], [1, 1], atol=1e-6)


def test_cost_matches_trajectory_cost():
    inst = generate("linear", 10, 0)
    path = (0,) + tuple(inst.out_nbrs[0][:1]) + (0,)
    res = optimal_trajectory(inst, path, True)
    assert res.ok
    assert res.cost == pytest.approx(trajectory_cost(inst, path, res.points), abs=1e-6)
    assert trajectory_residual(inst, path, res.points) <= 1e-6


def test_triplet_closed_form(triangle):
    assert triplet_lower_bound(triangle, 0, 1, 2) == pytest.approx(0.5 + 0.5 * SQRT2, abs=1e-6)


def test_triplet_common_point_is_zero():
    b = ([0, 0], [1, 1])
    inst = box_instance([b, b, b], [(0, 1), (1, 2)])
    assert triplet_lower_bound(inst, 0, 1, 2) == pytest.approx(0.0, abs=1e-6)


def test_triplet_vertex_cost_dominates():
    # a_v and b_v fixed two units apart; edges free
    length = CostTerm.norm2(np.hstack([-np.eye(2), np.eye(2)]))
    free = ConvexSet.box([-5] * 4, [5] * 4)
    fixed = ConvexSet.from_constraints(4, C=np.eye(4), d=[0, 0, 2, 0])
    verts = {"u": Vertex(free, (length,)), "v": Vertex(fixed, (length,)), "w": Vertex(free, (length,))}
    E = {("u", "v"): Edge(ConvexSet.unconstrained(8)), ("v", "w"): Edge(ConvexSet.unconstrained(8))}
    inst = GcsInstance(verts, E)
    assert triplet_lower_bound(inst, 0, 1, 2) == pytest.approx(2.0, abs=1e-6)


def test_triplet_requires_edges(triangle):
    inst = box_instance([([0, 0], [1, 1])] * 3, [(0, 1)])
    with pytest.raises(ValueError):
        triplet_lower_bound(inst, 0, 1, 2)


def test_triplet_infeasible_returns_none():
    pin = ConvexSet.from_constraints(4, C=np.hstack([np.eye(2), -np.eye(2)]), d=[0, 0])
    verts = {
        "u": Vertex(ConvexSet.box([0, 0], [1, 1])),
        "v": Vertex(ConvexSet.box([0, 0], [3, 3])),
        "w": Vertex(ConvexSet.box([2, 2], [3, 3])),
    }
    # x_v must equal x_u and x_w: boxes u and w are disjoint
    inst = GcsInstance(verts, {("u", "v"): Edge(pin), ("v", "w"): Edge(pin)})
    assert triplet_lower_bound(inst, 0, 1, 2) is None


def test_dropping_memberships_never_raises_bound():
    inst = generate("linear", 10, 0)
    for (u, v) in list(inst.edge_at)[:4]:
        for w in inst.out_nbrs[v][:2]:
            kept = solve_conic(triplet_program(inst, u, v, w, True)).objective
            relaxed = solve_conic(triplet_program(inst, u, v, w, False)).objective
            assert relaxed <= kept + 1e-7


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=3, max_size=3), st.integers(0, 2**31 - 1))
def test_triplet_bounds_sampled_costs(shift, seed):
    rng = np.random.default_rng(seed)
    boxes = [(np.array(s) - 0.5, np.array(s) + 0.5) for s in shift]
    inst = box_instance(boxes, [(0, 1), (1, 2)])
    lb = triplet_lower_bound(inst, 0, 1, 2)
    for _ in range(20):
        x = [rng.uniform(lo, hi) for lo, hi in boxes]
        val = 0.5 * np.linalg.norm(x[1] - x[0]) + 0.5 * np.linalg.norm(x[2] - x[1])
        assert lb <= val + 1e-6


def test_extra_constraint_never_lowers_optimum():
    inst = box_instance([([0, 0], [1, 1]), ([2, 0], [3, 1]), ([4, 0], [5, 1])], [(0, 1), (1, 2)])
    base = optimal_trajectory(inst, (0, 1, 2), False).cost
    pinned = box_instance([([0, 0], [0, 0]), ([2, 0], [3, 1]), ([4, 0], [5, 1])], [(0, 1), (1, 2)])
    assert optimal_trajectory(pinned, (0, 1, 2), False).cost >= base - 1e-7


def test_prefix_bound_below_closed_cost(square):
    full = optimal_trajectory(square, (0, 1, 2, 3, 0), True).cost
    for k in range(1, 5):
        assert prefix_lower_bound(square, (0, 1, 2, 3, 0)[:k]) <= full + 1e-9
    # vertex/edge shares up to (2) with the last edge at half
    assert prefix_lower_bound(square, (0, 1, 2)) == pytest.approx(1.5, abs=1e-6)


def test_cache_matches_fresh_solve():
    inst = generate("bezier", 10, 1)
    cache = TrajectoryCache(inst)
    path = (0, inst.out_nbrs[0][0], 0)
    a = cache.get(path, True)
    b = cache.get(path, True)
    assert a is b and cache.solves == 1 and cache.hits == 1
    fresh = optimal_trajectory(inst, path, True)
    assert fresh.cost == pytest.approx(a.cost, abs=1e-9)


@pytest.mark.parametrize(
    "cset,center,radius",
    [
        (ConvexSet.box([0, 0], [1, 1]), (0.5, 0.5), 0.5),
        (ConvexSet.point([2, 3]), (2, 3), 0.0),
        (ConvexSet.box([0, 0], [4, 2]), (2.0, 1.0), 1.0),
    ],
)
def test_chebyshev(cset, center, radius):
    c, r = chebyshev_center(cset)
    assert r == pytest.approx(radius, abs=1e-7)
    assert np.allclose(c, center, atol=1e-6)


def test_chebyshev_unbounded():
    with pytest.raises(ValueError, match="unbounded"):
        chebyshev_center(ConvexSet.from_constraints(2, A=[[1.0, 0.0]], b=[1.0]))
