import itertools
import math

import pytest

from gcs_tsp.conic import optimal_trajectory, prefix_lower_bound
from gcs_tsp.lbg import build_lbg, path_lb_cost
from gcs_tsp.oracle import realizations
from gcs_tsp.problems import gen_point, generate
from gcs_tsp.unfold import Unfolder, is_realization, unfold_paths

from conftest import SQRT2

SUITE = [("point", 4, 1), ("linear", 10, 0), ("linear", 12, 3), ("bezier", 10, 1)]


def _instance(family, size, seed):
    # the generator's point sizes start at 5; small complete instances keep enumeration cheap
    return gen_point(size, seed) if family == "point" else generate(family, size, seed)


def _tours(n, count=3):
    return list(itertools.islice(((0, *p, 0) for p in itertools.permutations(range(1, n))), count))


def test_triangle_realizations(triangle):
    g = build_lbg(triangle)
    ys = list(unfold_paths(g, (0, 1, 2, 0)))
    assert ys[0][0] == (0, 1, 2, 0)
    assert ys[0][1] == pytest.approx(2 + SQRT2, abs=1e-6)
    # segment-simple realizations may pass through later waypoints
    assert sorted(p for p, _ in ys) == sorted(realizations(triangle, (0, 1, 2, 0)))
    assert len(ys) == 8


def test_perimeter_detour(square_perimeter):
    g = build_lbg(square_perimeter)
    ys = list(unfold_paths(g, (0, 2, 0)))
    assert ys
    first = ys[0][0]
    assert first[1] in (1, 3) and first[2] == 2
    vals = [v for _, v in ys]
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))


def test_zero_bound_is_empty(square):
    g = build_lbg(square)
    assert list(unfold_paths(g, (0, 1, 2, 3, 0), bound=0.0)) == []


def test_unrealizable_yields_nothing():
    from gcs_tsp.problems import point_instance

    inst = point_instance([(0, 0), (1, 0), (0, 1)], edges=[(0, 1), (1, 0), (1, 2)])
    g = build_lbg(inst)
    assert list(unfold_paths(g, (0, 2, 0))) == []


@pytest.mark.parametrize("family,size,seed", SUITE)
def test_contract(family, size, seed):
    inst = _instance(family, size, seed)
    g = build_lbg(inst)
    for tour in _tours(inst.n):
        rec = []
        unf = Unfolder(g, tour, record=rec)
        ys = list(unf)
        vals = [v for _, v in ys]
        paths = [p for p, _ in ys]
        # order, uniqueness, realizations, exact bound values
        assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
        assert len(set(paths)) == len(paths)
        for p, v in ys:
            assert is_realization(inst, tour, p)
            assert v == pytest.approx(path_lb_cost(g, p, closed=True), abs=1e-9)
        # completeness at an infinite pruning cost
        ref = {p for p in realizations(inst, tour)}
        valid = {p for p in ref if _valid(g, p)}
        assert set(paths) == valid
        # admissibility on every recorded node of each generating chain
        low = {}
        for p, v in ys:
            for k in range(2, len(p)):
                low[p[:k]] = min(low.get(p[:k], math.inf), v)
        for p, f in rec:
            if p in low:
                assert f <= low[p] + 1e-9


def _valid(g, path):
    try:
        path_lb_cost(g, path, closed=True)
        return True
    except ValueError:
        return False


def test_heuristic_terminal_and_admissible(triangle):
    g = build_lbg(triangle)
    unf = Unfolder(g, (0, 1, 2, 0))
    assert unf.heuristic(1, 2, 4) == 0.0
    # remaining after reaching v3 = 2: passage centered at 2 and the wrap passage
    h = unf.heuristic(1, 2, 3)
    rest = g.lb[(1, 2, 0)] + g.lb[(2, 0, 1)]
    assert h <= rest + 1e-9


@pytest.mark.parametrize("family,size,seed", [("linear", 10, 0), ("point", 4, 2), ("bezier", 12, 1)])
def test_prefix_tightening_sound(family, size, seed):
    inst = _instance(family, size, seed)
    g = build_lbg(inst)
    tour = _tours(inst.n, 1)[0]
    costs = {}
    for p in realizations(inst, tour):
        res = optimal_trajectory(inst, p, True)
        if res.ok:
            costs[p] = res.cost
    best = min(costs.values())
    bound = best * 1.3 + 1e-3
    memo = {}
    unf = Unfolder(g, tour, bound=bound, prefix=lambda q: memo.setdefault(q, prefix_lower_bound(inst, q)))
    ys = list(unf)
    vals = [v for _, v in ys]
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
    for p, v in ys:
        # tightened bounds are still lower bounds of the true cost
        if p in costs:
            assert v <= costs[p] + 1e-6
    yielded = {p for p, _ in ys}
    for p, c in costs.items():
        if c < bound * (1 - 1e-5):
            assert p in yielded
