import numpy as np
import pytest

from conftest import depot, make_instance, small_instance
from mmcarshare.biobjective import lexicographic_solve
from mmcarshare.mip_core import LinearConstraint, solve
from mmcarshare.models import (VI_LEVELS, add_valid_inequalities, assemble, assemble_m1, assemble_m3,
                               assemble_m4, assemble_m4b, valid_inequality_rows, warm_start)
from mmcarshare.multigraph import build_graph
from mmcarshare.oracle import sample_feasible_solutions
from mmcarshare.separation import M4bSeparator

GRAPH_OF = {"M1": "M1", "M3": "M3", "M4": "M4", "M4B": "M4"}


def problem(inst, variant, level="none"):
    p = assemble(build_graph(inst, GRAPH_OF[variant]), variant)
    return add_valid_inequalities(p, level) if level != "none" else p


def min_cost(p):
    return lexicographic_solve(p, "cost").cost


def test_no_cars_means_no_car_legs():
    inst = make_instance({"p0": [[(3000, 0, 10, 100)]], "p1": [[(0, 3000, 10, 400)]]},
                         depots=[depot(cars=0)])
    p = problem(inst, "M1")
    pt = lexicographic_solve(p, "cost")
    assert pt.trips_by_mot["car"] == 0
    car = [l.id for l in p.graph.legs if l.m == "car"]
    assert not pt.solution[car].any()


def test_single_task_user_walks_four_legs(one_task_instance):
    p = problem(one_task_instance, "M4B")
    x = warm_start(p)
    g = p.graph
    assert sum(x[i] for i in g.by_user["p0"]) == 4
    legs_row = next(r for r in valid_inequality_rows(p, "m3_set") if r[3] == "vi_legs_p0")
    assert legs_row[2] == 4


def test_user_leg_count_is_nodes_minus_one():
    inst = small_instance(3, users=3, tasks=(1, 3))
    p = problem(inst, "M4B")
    x = warm_start(p)
    for u in inst.users:
        assert sum(x[i] for i in p.graph.by_user[u.id]) == len(p.graph.user_nodes(u.id)) - 1


def test_warm_start_is_feasible_for_every_model():
    inst = small_instance(5, users=3)
    for variant in ("M1", "M3", "M4", "M4B"):
        p = problem(inst, variant, "m4_set")
        x = warm_start(p)
        if p.timed:
            s = solve(p.model, warm_start=x, node_limit=0)
            assert s.objective < float("inf")
        else:
            assert p.model.is_feasible(x)


def test_all_zero_selection_is_infeasible():
    inst = small_instance(1)
    for variant in ("M1", "M3", "M4", "M4B"):
        p = problem(inst, variant)
        assert not p.model.is_feasible(np.zeros(p.model.n_vars))


def test_sec_rows_for_three_task_trip():
    inst = make_instance({"p0": [[(100, 0, 5, 100), (200, 0, 5, 150), (300, 0, 5, 200)]]})
    p = problem(inst, "M4B")
    assert sum(r.name.startswith("sec_") for r in p.model.rows) == 4


def test_m4b_rejects_long_trips():
    tasks = [(100 * i, 0, 1, 50 + 10 * i) for i in range(9)]
    with pytest.raises(ValueError):
        assemble_m4b(build_graph(make_instance({"p0": [tasks]}), "M4"))


def test_assemblers_check_graph_variant():
    inst = small_instance(0)
    with pytest.raises(ValueError):
        assemble_m1(build_graph(inst, "M3"))
    with pytest.raises(ValueError):
        assemble_m3(build_graph(inst, "M1"))
    with pytest.raises(ValueError):
        assemble_m4(build_graph(inst, "M3"))


def test_unknown_vi_level():
    with pytest.raises(ValueError):
        valid_inequality_rows(problem(small_instance(0), "M3"), "all")


def test_m1_ignores_valid_inequalities():
    p = problem(small_instance(0), "M1")
    n = len(p.model.rows)
    assert len(add_valid_inequalities(p, "m4_set").model.rows) == n


def test_timed_models_have_departure_variables():
    p = problem(small_instance(0), "M3")
    assert p.model.n_vars == 2 * p.n_legs and p.tau(0) == p.n_legs
    with pytest.raises(ValueError):
        problem(small_instance(0), "M4B").tau(0)


# --------------------------------------------------------------------------
# valid inequalities against feasible samples


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("graph_variant,variant,reduce", [("M3", "M3", True), ("M4", "M4B", True),
                                                          ("M4", "M4", True), ("M4", "M4B", False)])
def test_vi_rows_hold_for_feasible_samples(seed, graph_variant, variant, reduce):
    inst = small_instance(seed, users=3)
    g = build_graph(inst, graph_variant, reduce=reduce)
    p = assemble(g, variant)
    samples = sample_feasible_solutions(inst, g, 12, seed)
    assert samples
    for level in VI_LEVELS:
        for coeffs, sense, rhs, name in valid_inequality_rows(p, level):
            row = LinearConstraint(coeffs, sense, rhs, name)
            for s in samples:
                assert row.satisfied(s.x), name


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_vi_levels_keep_optimum(seed):
    inst = small_instance(seed, users=2)
    base = min_cost(problem(inst, "M4B"))
    for level in VI_LEVELS[1:]:
        assert min_cost(problem(inst, "M4B", level)) == base


# --------------------------------------------------------------------------
# model relations


@pytest.mark.parametrize("seed", range(3))
def test_m3_never_costs_more_than_m1(seed):
    inst = small_instance(seed, users=3, trips=(1, 1))
    assert min_cost(problem(inst, "M3")) <= min_cost(problem(inst, "M1"))


@pytest.mark.parametrize("seed", range(2))
def test_m4_and_m4b_agree(seed):
    inst = small_instance(seed, users=2, trips=(1, 1), tasks=(1, 1))
    a = lexicographic_solve(problem(inst, "M4", "m4_set"), "cost")
    b = lexicographic_solve(problem(inst, "M4B", "m4_set"), "cost")
    assert a.pair == b.pair


def test_m4b_optimum_passes_separation():
    inst = small_instance(2, users=3)
    p = problem(inst, "M4B", "m4_set")
    pt = lexicographic_solve(p, "cost")
    x = pt.solution.astype(float)
    assert p.model.is_feasible(x)
    assert M4bSeparator(p.graph)(x) == []
