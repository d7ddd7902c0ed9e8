import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain, make_instance, reachable_departures, small_instance
from mmcarshare.models import assemble_m4b, warm_start
from mmcarshare.multigraph import Leg, Node, build_graph
from mmcarshare.oracle import sample_feasible_solutions
from mmcarshare.separation import (TOO_EARLY, TOO_LATE, BrokenRoute, M4bSeparator, Violation,
                                   check_route_time_feasibility, check_synchronization, extract_car_routes,
                                   extract_user_route, m4b_callback, strengthen_violation)

H = 720
FREE = ("start", 0, 0, 0, H)  # the first leg's window is never checked


# --------------------------------------------------------------------------
# forward slack


def test_unconstrained_route_is_feasible():
    legs, nodes = chain([("start", 0, 10, 0, H), ("task", 30, 10, 0, H), ("task", 20, 5, 0, H)])
    assert check_route_time_feasibility(legs, 30, nodes) is None


def test_push_within_slack():
    # arrive by 15 + 40 = 55 at the latest, window opens at 60: a short wait
    legs, nodes = chain([FREE, ("start", 0, 10, 0, 15), ("task", 30, 10, 60, 75)])
    assert check_route_time_feasibility(legs, 30, nodes) is None


def test_too_early_when_push_exceeds_slack():
    # leg 1 departs by 15 at the latest, so leg 2 by 15 + 40 + 30 = 85 < 100
    legs, nodes = chain([FREE, ("start", 0, 10, 0, 15), ("task", 30, 10, 100, 115)])
    v = check_route_time_feasibility(legs, 30, nodes)
    assert isinstance(v, Violation) and v.mode == TOO_EARLY and v.leg.id == 2
    assert [l.id for l in v.prefix] == [0, 1, 2]


def test_too_late():
    legs, nodes = chain([FREE, ("start", 0, 10, 100, 115), ("task", 30, 10, 0, 120)])
    v = check_route_time_feasibility(legs, 30, nodes)
    assert v.mode == TOO_LATE and v.tau == 140


def test_first_leg_window_is_ignored():
    legs, nodes = chain([("start", 0, 10, 600, 615), ("task", 30, 10, 40, 55)])
    assert check_route_time_feasibility(legs, 30, nodes) is None


def test_trip_start_allows_unlimited_wait():
    legs, nodes = chain([("start", 0, 10, 0, 15), ("task", 5, 5, 0, 60), ("start", 0, 5, 400, 415),
                         ("task", 5, 5, 400, 450)])
    assert check_route_time_feasibility(legs, 30, nodes) is None


def test_slack_does_not_carry_past_a_closed_window():
    # waiting gathered at leg 1 cannot delay leg 1 past its own window end
    legs, nodes = chain([("start", 0, 0, 0, 0), ("task", 0, 0, 0, 5), ("task", 0, 0, 0, 40),
                         ("task", 0, 0, 40, 60)])
    assert check_route_time_feasibility(legs, 30, nodes) is None
    legs, nodes = chain([("start", 0, 0, 0, 0), ("task", 0, 0, 0, 5), ("task", 0, 0, 0, 40),
                         ("task", 0, 0, 66, 80)])
    assert check_route_time_feasibility(legs, 30, nodes) is not None


def random_route(rng, alpha=15, horizon=240):
    n = rng.randint(1, 8)
    spec = []
    for _ in range(n):
        j, k = rng.randrange(horizon // alpha), rng.randint(1, 3)
        spec.append((rng.choice(["start", "task", "task", "end"]), rng.choice([0, 5, 15, 20]),
                     rng.randint(0, 25), j * alpha, min(horizon, (j + k) * alpha)))
    return chain(spec)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_exhaustive_search(seed):
    legs, nodes = random_route(random.Random(seed))
    expected = reachable_departures(legs, 30, nodes, 240)
    assert (check_route_time_feasibility(legs, 30, nodes) is None) == expected


# --------------------------------------------------------------------------
# route extraction


def pick(g, y, z, m, kind, at):
    for i in g.by_pair[(y, z)]:
        l = g.legs[i]
        if l.m == m and l.kind == kind and l.o <= at <= l.e:
            return l.id
    raise LookupError((y, z, m, kind, at))


def trip_legs(g, trip, m, start):
    """ASAP duplicates along the stored order; returns (ids, end time)."""
    seq = [f"A:{trip.id}"] + [f"Q:{q.id}" for q in trip.tasks] + [f"B:{trip.id}"]
    ids, now = [], start
    for y, z in zip(seq, seq[1:]):
        i = pick(g, y, z, m, "trip", now)
        ids.append(i)
        now += g.legs[i].t + g.nodes[z].service_time
    return ids, now


def test_single_trip_user_route_has_four_legs(one_task_instance):
    g = build_graph(one_task_instance, "M4")
    ws = warm_start(assemble_m4b(g))
    route = extract_user_route(ws, g, "p0")
    assert len(route) == 4 and route[-1].z == "F:p0"


def test_two_trip_user_route_has_one_connection():
    inst = make_instance({"p0": [[(1000, 0, 10, 60)], [(0, 1000, 10, 400)]]})
    g = build_graph(inst, "M4")
    route = extract_user_route(warm_start(assemble_m4b(g)), g, "p0")
    assert sum(l.kind == "user_link" for l in route) == 1


def test_broken_route_raises(one_task_instance):
    g = build_graph(one_task_instance, "M4")
    with pytest.raises(BrokenRoute):
        extract_user_route(np.zeros(len(g.legs)), g, "p0")


def test_routes_match_oracle_samples():
    inst = small_instance(4, users=3)
    g = build_graph(inst, "M4")
    for s in sample_feasible_solutions(inst, g, 15, seed=1):
        for u in inst.users:
            assert [l.id for l in extract_user_route(s.x, g, u.id)] == s.user_routes[u.id]
        multi = [r for r in s.car_routes if sum(g.nodes[g.legs[i].y].kind == "start" for i in r) >= 2]
        assert sorted([l.id for l in r] for r in extract_car_routes(s.x, g)) == sorted(multi)


def test_no_car_legs_no_car_routes(one_task_instance):
    g = build_graph(one_task_instance, "M4")
    assert extract_car_routes(warm_start(assemble_m4b(g)), g) == []


def car_instance(cars):
    return make_instance({f"p{i}": [[(600 + 100 * i, 0, 10, 60 + 150 * i)]] for i in range(4)},
                         depots=[__import__("conftest").depot(cars=cars)])


def car_solution(g, inst, chains):
    """Car chains in M3-style untimed selection plus public trips for the rest."""
    x = np.zeros(len(g.legs))
    start = {}
    for ch in chains:
        now = 0
        x[pick(g, "D:d0", f"A:{ch[0]}", "car", "depot_out", 0)] = 1
        for k, rid in enumerate(ch):
            ids, now = trip_legs(g, inst.trip(rid), "car", max(now, 60 + 150 * int(rid[1:])))
            x[ids] = 1
            nxt = (f"A:{ch[k + 1]}", "car_link") if k + 1 < len(ch) else ("D:d0", "depot_in")
            x[pick(g, f"B:{rid}", nxt[0], "car", nxt[1], now)] = 1
    return x


def test_one_car_two_trips():
    inst = car_instance(1)
    g = build_graph(inst, "M4")
    routes = extract_car_routes(car_solution(g, inst, [["r0", "r1"]]), g)
    assert len(routes) == 1
    assert sum(g.nodes[l.y].kind == "start" for l in routes[0]) == 2


def test_two_cars_one_depot():
    inst = car_instance(2)
    g = build_graph(inst, "M4")
    routes = extract_car_routes(car_solution(g, inst, [["r0", "r1"], ["r2", "r3"]]), g)
    assert len(routes) == 2 and all(r[0].y == "D:d0" for r in routes)
    assert routes[0][1].y != routes[1][1].y


def test_single_trip_car_routes_are_dropped():
    inst = car_instance(2)
    g = build_graph(inst, "M4")
    assert extract_car_routes(car_solution(g, inst, [["r0"], ["r2"]]), g) == []


# --------------------------------------------------------------------------
# strengthened rows


class FakeGraph:
    def __init__(self, legs, nodes, groups=()):
        self.legs, self.nodes = legs, nodes
        self.groups = [set(g) for g in groups]

    def duplicates(self, i):
        return sorted(next((g for g in self.groups if i in g), {i}))


def test_rows_without_duplicates_are_plain():
    legs, nodes = chain([FREE, ("start", 0, 10, 0, 15), ("task", 30, 10, 100, 115)])
    v = check_route_time_feasibility(legs, 30, nodes)
    rows = strengthen_violation(v, FakeGraph(legs, nodes))
    assert len(rows) == 1  # the failing leg is last, so route and prefix coincide
    assert rows[0].coeffs == {0: 1.0, 1: 1.0, 2: 1.0} and rows[0].rhs == 2


def test_too_early_lifts_later_duplicates():
    legs, nodes = chain([FREE, ("start", 0, 10, 0, 15), ("task", 30, 10, 100, 115), ("task", 10, 5, 0, H)])
    later = [Leg(4 + k, None, "n2", "n3", None, 0, 0, 10, 115 + 15 * k, 130 + 15 * k, "trip") for k in range(3)]
    earlier = Leg(7, None, "n2", "n3", None, 0, 0, 10, 85, 100, "trip")
    g = FakeGraph(legs + later + [earlier], nodes, [(2, 4, 5, 6, 7)])
    v = check_route_time_feasibility(legs, 30, nodes)
    assert v.mode == TOO_EARLY and v.leg.id == 2
    rows = strengthen_violation(v, g)
    prefix = next(r for r in rows if r.name.endswith("prefix"))
    assert set(prefix.coeffs) == {0, 1, 2, 4, 5, 6} and prefix.rhs == 2
    x = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    assert all(r.lhs(x) > r.rhs for r in rows)
    # swapping in an earlier window may repair the route, so it stays out
    assert all(7 not in r.coeffs for r in rows)


def test_rows_hold_for_oracle_solutions():
    for seed in range(3):
        inst = small_instance(seed, users=3)
        g = build_graph(inst, "M4")
        samples = sample_feasible_solutions(inst, g, 10, seed)
        problem = assemble_m4b(g)
        m = problem.model.copy()
        m.set_objective(problem.cost)
        from mmcarshare.mip_core import solve

        sep = M4bSeparator(g)
        sol = solve(m, sep, warm_start(problem), node_limit=300)
        for s in samples:
            for cut in sol.cuts:
                assert cut.satisfied(s.x), cut.name


# --------------------------------------------------------------------------
# synchronisation and the callback


def test_oracle_samples_pass_every_stage():
    for seed in range(3):
        inst = small_instance(seed, users=3, cars=1)
        g = build_graph(inst, "M4")
        for s in sample_feasible_solutions(inst, g, 10, seed):
            assert check_synchronization(s.x, g) is None
            assert m4b_callback(s.x, g) == []


def test_no_car_legs_sync_passes(one_task_instance):
    g = build_graph(one_task_instance, "M4")
    assert check_synchronization(warm_start(assemble_m4b(g)), g) is None


def handover():
    """User p1 rides trip w then x; the car serves x and then p0's trip t.

    Each route is feasible on its own, but w pins x late and t's first window
    closes before x can end. Returns (graph, selection) for the first
    w-start offset producing that situation.
    """
    inst = make_instance({"p0": [[(900, 300, 15, 500)]], "p1": [[(600, 0, 20, 390)], [(0, 700, 25, 450)]]})
    g = build_graph(inst, "M4", reduce=False)
    tt, tw, tx = inst.trips
    for w0 in range(360, 390):
        x = np.zeros(len(g.legs))
        w_ids, w_end = trip_legs(g, tw, "public", w0)
        x_ids, x_end = trip_legs(g, tx, "car", w_end)
        if g.legs[w_ids[0]].o != w0 - w0 % 15 or w0 % 15 == 0:
            continue
        for t0 in range(x_end - 14, x_end):
            t_ids, t_end = trip_legs(g, tt, "car", t0)
            if g.legs[t_ids[0]].e >= x_end:
                continue
            x[w_ids + x_ids + t_ids] = 1
            x[pick(g, "D:d0", "A:r1", "public", "depot_out", 0)] = 1
            x[pick(g, "B:r1", "D:d0", "public", "depot_in", w_end)] = 1
            x[pick(g, "D:d0", "A:r2", "car", "depot_out", 0)] = 1
            link = pick(g, "B:r2", "A:r0", "car", "car_link", t0)
            x[link] = 1
            x[pick(g, "B:r0", "D:d0", "car", "depot_in", t_end)] = 1
            x[pick(g, "G:p1", "A:r1", None, "source", 0)] = 1
            x[pick(g, "B:r1", "A:r2", None, "user_link", w_end)] = 1
            x[pick(g, "B:r2", "F:p1", None, "sink", x_end)] = 1
            x[pick(g, "G:p0", "A:r0", None, "source", 0)] = 1
            x[pick(g, "B:r0", "F:p0", None, "sink", t_end)] = 1
            sep = M4bSeparator(g)
            if not sep._users(x) and not sep._cars(x) and check_synchronization(x, g):
                return g, x
            x[:] = 0
    raise AssertionError("no handover scenario found")


def test_sync_detects_handover_conflict():
    g, x = handover()
    cuts = check_synchronization(x, g)
    assert cuts and len(cuts) == 1
    assert cuts[0].lhs(x) > cuts[0].rhs


def test_callback_reports_single_sync_cut():
    g, x = handover()
    sep = M4bSeparator(g)
    cuts = sep(x)
    assert len(cuts) == 1 and sep.counts == {"user": 0, "car": 0, "sync": 1}
    assert sep.log_csv().splitlines()[0] == "iteration,stage,size"


def test_sync_cut_is_valid_for_feasible_samples():
    g, x = handover()
    cut = check_synchronization(x, g)[0]
    inst = g.instance
    for s in sample_feasible_solutions(inst, g, 40, seed=3):
        assert cut.satisfied(s.x)


def test_two_bad_user_routes_give_several_rows():
    inst = make_instance({"p0": [[(900, 0, 20, 200)]], "p1": [[(0, 900, 20, 300)]]})
    g = build_graph(inst, "M4", reduce=False)
    x = np.zeros(len(g.legs))
    for u, r in zip(("p0", "p1"), inst.trips):
        ids, end = trip_legs(g, r, "public", 300)
        # move the last leg to a window that closed long ago
        last = g.legs[ids[-1]]
        ids[-1] = pick(g, last.y, last.z, "public", "trip", 30)
        x[ids] = 1
        x[pick(g, "D:d0", f"A:{r.id}", "public", "depot_out", 0)] = 1
        x[pick(g, f"B:{r.id}", "D:d0", "public", "depot_in", end)] = 1
        x[pick(g, f"G:{u}", f"A:{r.id}", None, "source", 0)] = 1
        x[pick(g, f"B:{r.id}", f"F:{u}", None, "sink", end)] = 1
    cuts = m4b_callback(x, g)
    assert len(cuts) >= 2
    assert all(c.lhs(x) > c.rhs for c in cuts)
    assert {c.name for c in cuts} >= {"too_late_route", "too_late_prefix"}
