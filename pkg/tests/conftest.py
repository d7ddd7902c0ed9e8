"""Shared builders for hand-made instances, routes and tiny graphs."""

from __future__ import annotations

import numpy as np
import pytest

from mmcarshare.instance import (UNBOUNDED, Depot, GeneratorParams, Instance, TaskSpec, TripSpec, User,
                                 default_periods, generate_instance)
from mmcarshare.multigraph import Leg, Node

ALL_ACCESS = (1, 1, 1, 1, 1)


def depot(did="d0", loc=(0, 0), cars=1, cars_end=None):
    end = cars if cars_end is None else cars_end
    return Depot(did, loc, (("car", cars), ("bike", UNBOUNDED), ("public", UNBOUNDED)),
                 (("car", end), ("bike", UNBOUNDED), ("public", UNBOUNDED)))


def make_instance(users, depots=None, horizon=720, max_wait=30, alpha=15, name="hand"):
    """``users`` maps a user id to a list of trips; a trip is a list of tasks
    ``(x, y, service_time, fixed_start)`` and starts/ends at the first depot."""
    depots = tuple(depots or (depot(),))
    d0 = depots[0].id
    trips, out_users, qn, rn = [], [], 0, 0
    for uid, spec in users.items():
        ids = []
        for tasks in spec:
            rid = f"r{rn}"
            rn += 1
            ts = []
            for x, y, s, start in tasks:
                ts.append(TaskSpec(f"q{qn}", (x, y), s, start))
                qn += 1
            trips.append(TripSpec(rid, uid, d0, d0, tuple(ts)))
            ids.append(rid)
        out_users.append(User(uid, ALL_ACCESS, tuple(ids)))
    return Instance(tuple(out_users), depots, tuple(trips), default_periods(_bounds(horizon)),
                    horizon=horizon, max_wait=max_wait, alpha=alpha, name=name)


def _bounds(horizon):
    from mmcarshare.instance import DEFAULT_PERIOD_BOUNDS

    return tuple(b * horizon // 720 for b in DEFAULT_PERIOD_BOUNDS)


def small_instance(seed, users=2, trips=(1, 2), tasks=(1, 2), depots=1, cars=1):
    return generate_instance(GeneratorParams(users, trips, tasks, n_depots=depots, cars_per_depot=cars), seed)


def chain(spec, h=30):
    """Route from ``[(kind, service, t, o, e), ...]``: each entry is a node and
    the leg leaving it. Returns (legs, nodes)."""
    nodes, legs = {}, []
    for i, (kind, s, t, o, e) in enumerate(spec):
        nodes[f"n{i}"] = Node(f"n{i}", kind, "x", s)
        legs.append(Leg(i, None, f"n{i}", f"n{i + 1}", None, 0, 0, t, o, e, "trip"))
    nodes[f"n{len(spec)}"] = Node(f"n{len(spec)}", "end", "x", 0)
    return legs, nodes


def reachable_departures(route, h, nodes, horizon):
    """Exhaustive search: every integer departure minute of every leg."""
    reach = np.ones(horizon + 1, bool)
    for i in range(1, len(route)):
        prev, leg = route[i - 1], route[i]
        v = nodes[leg.y]
        gap = prev.t + v.service_time
        idx = np.nonzero(reach)[0]
        new = np.zeros(horizon + 1, bool)
        if v.kind == "start":
            if idx[0] + gap <= horizon:
                new[idx[0] + gap:] = True
        else:
            diff = np.zeros(horizon + 2, int)
            for t in idx:
                a = t + gap
                if a <= horizon:
                    diff[a] += 1
                    diff[min(a + h, horizon) + 1] -= 1
            new = np.cumsum(diff)[: horizon + 1] > 0
        window = np.zeros(horizon + 1, bool)
        window[leg.o: min(leg.e, horizon) + 1] = True
        reach = new & window
        if not reach.any():
            return False
    return True


@pytest.fixture
def one_task_instance():
    return make_instance({"p0": [[(1500, 0, 20, 100)]]})


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
