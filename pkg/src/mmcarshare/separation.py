"""Lazy separation of time-infeasible user routes, car routes and handovers.

Route timing: a route is a sequence of legs; between consecutive legs sits a
node with service time s. The next departure is at least the previous
departure plus its travel time plus s, and at most h minutes later, except at
trip-start nodes where waiting is unbounded. Every leg but the first must
depart inside its own interval [o, e]; the first leg of a user or car route
(source or depot leg) is never constrained.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mip_core import GE, LE, LinearConstraint, solve_lp_feasibility
from .multigraph import CAR_LINK, DEPOT_OUT, FIRST_LEGS, SOURCE, USER_LINK, Graph, Leg

TOO_EARLY, TOO_LATE = "too_early", "too_late"


class BrokenRoute(RuntimeError):
    """Selected legs do not form a walk; points at a modelling bug, not a cut."""


@dataclass
class RouteState:
    tau: int = 0
    W: float = 0
    delta: float = math.inf
    F: float = 0


@dataclass
class Violation:
    route: list
    prefix: list
    leg: Leg
    tau: int
    mode: str


def check_route_time_feasibility(route: Sequence[Leg], h: int, nodes) -> Optional[Violation]:
    """Forward-slack feasibility check; returns None when the route is feasible.

    ``nodes`` maps node ids to objects with ``kind`` and ``service_time``.
    """
    st = RouteState()
    for i in range(1, len(route)):
        leg, prev = route[i], route[i - 1]
        v = nodes[leg.y]
        if v.kind == "start":
            st.delta, st.F, st.W = math.inf, 0, 0
        st.tau += v.service_time + prev.t
        st.W += min(max(0, leg.e - st.tau), h)
        st.delta = min(st.delta, max(0, leg.e - (st.tau + st.W)))
        # waiting gathered upstream cannot carry a departure past this leg's window
        st.W = min(st.W, max(0, leg.e - st.tau))
        st.F = st.W + st.delta
        if leg.o <= st.tau <= leg.e:
            continue
        before = st.tau
        st.tau += min(max(0, leg.o - st.tau), st.F)
        if leg.o <= st.tau <= leg.e:
            pushed = st.tau - before
            st.delta += min(st.W - pushed, 0)
            st.W = max(st.W - pushed, 0)
            continue
        mode = TOO_EARLY if st.tau < leg.o else TOO_LATE
        return Violation(list(route), list(route[: i + 1]), leg, st.tau, mode)
    return None


# --------------------------------------------------------------------------
# route extraction


def _selected(x, ids):
    return [i for i in ids if x[i] > 0.5]


def extract_user_route(x, graph: Graph, p: str) -> list[Leg]:
    route, v, sink = [], f"G:{p}", f"F:{p}"
    guard = len(graph.by_user[p]) + 1
    while v != sink:
        nxt = _selected(x, graph.user_out[(v, p)])
        if len(nxt) != 1 or len(route) > guard:
            raise BrokenRoute(f"user {p}: walk stalls at {v} ({len(nxt)} selected legs)")
        leg = graph.legs[nxt[0]]
        route.append(leg)
        v = leg.z
    return route


def _walk_cars(x, graph: Graph):
    routes, used = [], set()
    for d in (n for n in graph.nodes.values() if n.kind == "depot"):
        for start in _selected(x, graph.out_k[(d.id, "car")]):
            leg = graph.legs[start]
            route = [leg]
            used.add(start)
            while graph.nodes[leg.z].kind != "depot":
                nxt = [i for i in _selected(x, graph.out_k[(leg.z, "car")]) if i not in used]
                if len(nxt) != 1:
                    raise BrokenRoute(f"car route stalls at {leg.z}")
                leg = graph.legs[nxt[0]]
                used.add(leg.id)
                route.append(leg)
            routes.append(route)
    return routes, used


def _trips_in(route, graph):
    return sum(1 for l in route if graph.nodes[l.y].kind == "start")


def extract_car_routes(x, graph: Graph) -> list[list[Leg]]:
    """Car routes covering at least two trips, one per selected depot-out car leg."""
    routes, _ = _walk_cars(x, graph)
    return [r for r in routes if _trips_in(r, graph) >= 2]


# --------------------------------------------------------------------------
# cuts


def _no_good(legs: Sequence[int], extra: Sequence[int] = (), name: str = "") -> LinearConstraint:
    coeffs = {i: 1.0 for i in legs}
    for i in extra:
        coeffs[i] = 1.0
    return LinearConstraint(coeffs, LE, len(legs) - 1, name)


def _replacements(graph: Graph, leg: Leg, mode: str, is_failing: bool) -> list[int]:
    """Duplicates of ``leg`` that keep the violation when swapped in.

    For the failing leg only the window matters. For the other legs the swap
    must also not shorten (too_late) or lengthen (too_early) the travel time.
    """
    out = []
    for j in graph.duplicates(leg.id):
        d = graph.legs[j]
        if j == leg.id:
            continue
        if mode == TOO_EARLY:
            later_ok = d.o > leg.o if is_failing else (d.o < leg.o and d.t <= leg.t)
        else:
            later_ok = d.o < leg.o if is_failing else (d.o > leg.o and d.t >= leg.t)
        if later_ok:
            out.append(j)
    return out


def strengthen_violation(violation: Violation, graph: Graph) -> list[LinearConstraint]:
    """Infeasible-path rows over the full route and over the failing prefix,
    each lifted with interchangeable duplicates."""
    failing = violation.leg
    rows = []
    for legs, tag in ((violation.route, "route"), (violation.prefix, "prefix")):
        extra = []
        for l in legs:
            if l.id == failing.id:
                extra += _replacements(graph, l, violation.mode, True)
            elif legs is violation.prefix or _position(violation.route, l) < _position(violation.route, failing):
                extra += _replacements(graph, l, violation.mode, False)
            else:
                # legs after the failing one are irrelevant to the failure
                extra += [j for j in graph.duplicates(l.id) if j != l.id]
        row = _no_good([l.id for l in legs], extra, f"{violation.mode}_{tag}")
        if not rows or row.coeffs != rows[0].coeffs or row.rhs != rows[0].rhs:
            rows.append(row)
    return rows


def _position(route, leg):
    for k, l in enumerate(route):
        if l.id == leg.id:
            return k
    raise ValueError("leg not on route")


# --------------------------------------------------------------------------
# synchronisation


def _timing_pairs(selected: set, graph: Graph):
    """(in-leg, out-leg, node) pairs linked by precedence/wait rows among selected legs."""
    pairs = set()
    for lid in selected:
        l = graph.legs[lid]
        v = l.z
        if graph.nodes[v].kind == "depot":
            continue
        if l.m is not None:
            for n in graph.out_k[(v, l.m)]:
                if n in selected:
                    pairs.add((lid, n, v))
        if l.u is not None and l.kind in (SOURCE, USER_LINK, "trip", "sink"):
            for n in graph.user_out[(v, l.u)]:
                if n in selected:
                    pairs.add((lid, n, v))
    return pairs


def _sync_system(selected: set, graph: Graph):
    """Difference constraints over departures of non-first selected legs.

    Each edge (i, j, w, leg, kind) reads tau_j - tau_i <= w; None stands for
    the zero reference. ``leg`` is the leg whose data sets w and ``kind`` tells
    which datum: "upper" (e), "lower" (-o), "prec" (-t) or "wait" (+t).
    """
    h = graph.max_wait
    edges = []
    timed = [i for i in selected if graph.legs[i].kind not in FIRST_LEGS]
    for i in timed:
        l = graph.legs[i]
        edges.append((None, i, l.e, i, "upper"))
        edges.append((i, None, -l.o, i, "lower"))
    for a, b, v in _timing_pairs(selected, graph):
        if graph.legs[a].kind in FIRST_LEGS:
            continue
        gap = graph.legs[a].t + graph.nodes[v].service_time
        edges.append((b, a, -gap, a, "prec"))
        if graph.nodes[v].kind != "start":
            edges.append((a, b, gap + h, a, "wait"))
    return timed, edges


def _components(timed, edges):
    parent = {i: i for i in timed}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b, *_ in edges:
        if a is not None and b is not None:
            parent[find(a)] = find(b)
    comps = defaultdict(list)
    for i in timed:
        comps[find(i)].append(i)
    return list(comps.values())


def _negative_cycle(nodes, edges):
    """Edges of a negative cycle of the constraint graph (Bellman-Ford), or None."""
    idx = {None: 0}
    for n in nodes:
        idx[n] = len(idx)
    dist = [0.0] * len(idx)
    pred = [None] * len(idx)
    last = None
    for _ in range(len(idx)):
        last = None
        for e in edges:
            ia, ib = idx[e[0]], idx[e[1]]
            if dist[ia] + e[2] < dist[ib]:
                dist[ib] = dist[ia] + e[2]
                pred[ib] = e
                last = ib
        if last is None:
            return None
    v = last
    for _ in range(len(idx)):
        v = idx[pred[v][0]]
    cycle, u = [], v
    while True:
        cycle.append(pred[u])
        u = idx[pred[u][0]]
        if u == v:
            return cycle


def _rows_for(comp, edges):
    """LP rows of one component in local variable numbering."""
    loc = {i: k for k, i in enumerate(comp)}
    rows = []
    for a, b, w, *_ in edges:
        if a is None and b in loc:
            rows.append(LinearConstraint({loc[b]: 1.0}, LE, w))
        elif b is None and a in loc:
            rows.append(LinearConstraint({loc[a]: -1.0}, LE, w))
        elif a in loc and b in loc:
            rows.append(LinearConstraint({loc[b]: 1.0, loc[a]: -1.0}, LE, w))
    return rows


_SIGN = {"upper": ("e", 1), "lower": ("o", -1), "prec": ("t", -1), "wait": ("t", 1)}


def _lift_cycle(cycle, graph: Graph) -> LinearConstraint:
    """No-good over the legs of a negative cycle, lifted with duplicates.

    A duplicate has the endpoints of its leg, so every cycle edge survives a
    swap and only the leg's own data in the edge weights change. Each leg in
    turn admits every duplicate that keeps the worst-case cycle weight at
    most -1.
    """
    terms = defaultdict(list)
    legs = []
    for a, b, w, leg, kind in cycle:
        terms[leg].append(_SIGN[kind])
        for n in (a, b, leg):
            if n is not None and n not in legs:
                legs.append(n)

    def contrib(d, ts):
        return sum(sign * getattr(d, attr) for attr, sign in ts)

    weight = sum(w for _, _, w, *_ in cycle)
    slack = -1 - weight  # admissible total increase, data are integers
    allowed = {}
    for lid in legs:
        l, ts = graph.legs[lid], terms.get(lid, [])
        base = contrib(l, ts)
        ok = [(contrib(graph.legs[j], ts) - base, j) for j in graph.duplicates(lid) if j != lid]
        ok = [(inc, j) for inc, j in ok if inc <= slack]
        allowed[lid] = [j for _, j in ok]
        slack -= max([0] + [inc for inc, _ in ok])
    extra = [j for lid in legs for j in allowed[lid]]
    return _no_good(sorted(legs), extra, "sync")


def route_core_cut(route: Sequence[Leg], graph: Graph) -> Optional[LinearConstraint]:
    """Lifted no-good over a negative cycle of one route's timing system."""
    ids = {l.id for l in route}
    timed, edges = _sync_system(ids, graph)
    cycle = _negative_cycle(timed, edges)
    return _lift_cycle(cycle, graph) if cycle else None


def check_synchronization(x, graph: Graph) -> Optional[list[LinearConstraint]]:
    """Joint timing LP of all selected legs, split into independent components.

    Returns None when every component is feasible; otherwise one lifted
    no-good per infeasible component over a negative cycle of its
    difference-constraint graph (an infeasible subsystem).
    """
    selected = {i for i in range(len(graph.legs)) if x[i] > 0.5}
    timed, edges = _sync_system(selected, graph)
    cuts = []
    for comp in _components(timed, edges):
        members = set(comp)
        local = [e for e in edges if (e[0] in members or e[0] is None) and (e[1] in members or e[1] is None)]
        if solve_lp_feasibility(_rows_for(comp, local), len(comp)):
            continue
        cycle = _negative_cycle(comp, local)
        cuts.append(_lift_cycle(cycle, graph) if cycle else _no_good(sorted(members), name="sync"))
    return cuts or None


# --------------------------------------------------------------------------
# callback


@dataclass
class CutRecord:
    iteration: int
    stage: str
    size: int


class M4bSeparator:
    """Incumbent callback for the binary model: users, then cars, then handovers."""

    def __init__(self, graph: Graph):
        self.graph = graph
        self.calls = 0
        self.counts = {"user": 0, "car": 0, "sync": 0}
        self.log: list[CutRecord] = []

    def __call__(self, x) -> list[LinearConstraint]:
        self.calls += 1
        for stage, fn in (("user", self._users), ("car", self._cars), ("sync", self._sync)):
            cuts = fn(x)
            if cuts:
                self.counts[stage] += len(cuts)
                self.log += [CutRecord(self.calls, stage, len(c.coeffs)) for c in cuts]
                return cuts
        return []

    def _users(self, x):
        g, cuts = self.graph, []
        for u in g.instance.users:
            route = extract_user_route(x, g, u.id)
            leftover = set(_selected(x, g.by_user[u.id])) - {l.id for l in route}
            if leftover:
                cuts.append(_no_good(sorted(leftover), name="user_cycle"))
            v = check_route_time_feasibility(route, g.max_wait, g.nodes)
            if v is not None:
                cuts += self._with_core(strengthen_violation(v, g), route)
        return cuts

    def _cars(self, x):
        g, cuts = self.graph, []
        routes, used = _walk_cars(x, g)
        car_legs = {i for (v, k), ids in g.out_k.items() if k == "car" for i in ids if x[i] > 0.5}
        leftover = car_legs - used
        if leftover:
            cuts.append(_no_good(sorted(leftover), name="car_cycle"))
        for route in routes:
            if _trips_in(route, g) < 2:
                continue
            v = check_route_time_feasibility(route, g.max_wait, g.nodes)
            if v is not None:
                cuts += self._with_core(strengthen_violation(v, g), route)
        return cuts

    def _with_core(self, rows, route):
        # the negative-cycle core is often far shorter than the failing prefix
        core = route_core_cut(route, self.graph)
        if core is not None and all(core.coeffs != r.coeffs for r in rows):
            rows = rows + [core]
        return rows

    def _sync(self, x):
        return check_synchronization(x, self.graph) or []

    def log_csv(self) -> str:
        lines = ["iteration,stage,size"]
        lines += [f"{r.iteration},{r.stage},{r.size}" for r in self.log]
        return "\n".join(lines) + "\n"


def m4b_callback(x, graph: Graph) -> list[LinearConstraint]:
    """Stateless form of :class:`M4bSeparator`."""
    return M4bSeparator(graph)(x)
