"""Assembly of the four model variants over a leg multigraph.

Variable layout: x_l has index l (the leg id); for the timed variants the
departure tau_l has index n_legs + l.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mip_core import BINARY, CONTINUOUS, EQ, GE, LE, Model
from .multigraph import FIRST_LEGS, SINK, SOURCE, USER_LINK, Graph

VI_LEVELS = ("none", "m3_set", "m4_set")
MAX_SUBTOUR_TASKS = 8


@dataclass
class AssembledProblem:
    model: Model
    graph: Graph
    variant: str  # M1, M3, M4, M4B
    cost: np.ndarray
    pref: np.ndarray
    timed: bool = False
    vi_level: str = "none"
    vi_rows: list = field(default_factory=list)

    @property
    def n_legs(self) -> int:
        return len(self.graph.legs)

    def x(self, leg_id: int) -> int:
        return leg_id

    def tau(self, leg_id: int) -> int:
        if not self.timed:
            raise ValueError(f"{self.variant} has no departure variables")
        return self.n_legs + leg_id

    def objectives(self, values) -> tuple[int, int]:
        sel = np.asarray(values[: self.n_legs]) > 0.5
        return int(self.cost[sel].sum()), int(self.pref[sel].sum())

    @property
    def needs_separation(self) -> bool:
        return self.variant == "M4B"


def _base(graph: Graph, name: str) -> tuple[Model, np.ndarray, np.ndarray]:
    m = Model(name)
    cost = np.array([l.c for l in graph.legs], dtype=np.int64)
    pref = np.array([l.theta for l in graph.legs], dtype=np.int64)
    for l in graph.legs:
        m.add_var(f"x{l.id}", BINARY, obj=l.c)
    return m, cost, pref


def _cover_and_flow(m: Model, graph: Graph) -> None:
    mots = [mt.kind for mt in graph.instance.mots]
    for v in graph.trip_nodes():
        m.add_constr({i: 1 for k in mots for i in graph.out_k[(v, k)]}, EQ, 1, f"cover_{v}")
        for k in mots:
            row = {i: 1 for i in graph.in_k[(v, k)]}
            for i in graph.out_k[(v, k)]:
                row[i] = row.get(i, 0) - 1
            if row:
                m.add_constr(row, EQ, 0, f"flow_{v}_{k}")
    for d in graph.instance.depots:
        node = f"D:{d.id}"
        for k in mots:
            if d.start_count(k) is not None and graph.out_k[(node, k)]:
                m.add_constr({i: 1 for i in graph.out_k[(node, k)]}, LE, d.start_count(k), f"cap_out_{d.id}_{k}")
            if d.end_count(k) is not None and graph.in_k[(node, k)]:
                m.add_constr({i: 1 for i in graph.in_k[(node, k)]}, LE, d.end_count(k), f"cap_in_{d.id}_{k}")


def _user_flow(m: Model, graph: Graph) -> None:
    inst = graph.instance
    mots = [mt.kind for mt in inst.mots]
    for u in inst.users:
        p = u.id
        m.add_constr({i: 1 for i in graph.user_out[(f"G:{p}", p)]}, EQ, 1, f"source_{p}")
        m.add_constr({i: 1 for i in graph.user_in[(f"F:{p}", p)]}, EQ, 1, f"sink_{p}")
        for r in inst.trips_of(p):
            a, b = f"A:{r.id}", f"B:{r.id}"
            row = {i: 1 for i in graph.user_in[(a, p)]}
            for k in mots:
                for i in graph.out_k[(a, k)]:
                    row[i] = row.get(i, 0) - 1
            m.add_constr(row, EQ, 0, f"ubal_{a}")
            row = {i: 1 for k in mots for i in graph.in_k[(b, k)]}
            for i in graph.user_out[(b, p)]:
                row[i] = row.get(i, 0) - 1
            m.add_constr(row, EQ, 0, f"ubal_{b}")


def assemble_m1(graph: Graph) -> AssembledProblem:
    if graph.variant not in ("M1", "M2"):
        raise ValueError("assemble_m1 expects an M1 or M2 graph")
    m, cost, pref = _base(graph, f"{graph.variant}_{graph.instance.name}")
    _cover_and_flow(m, graph)
    return AssembledProblem(m, graph, "M1", cost, pref)


def timing_pairs(graph: Graph):
    """(in-leg, out-leg, node, wait_limited) for every pair tied by a timing row.

    MOT-layer pairs at every trip node; user-layer pairs at trip starts and ends
    (at tasks they coincide with the MOT-layer pairs).
    """
    mots = [mt.kind for mt in graph.instance.mots]
    for v in graph.trip_nodes():
        node = graph.nodes[v]
        limited = node.kind != "start"
        for k in mots:
            for l in graph.in_k[(v, k)]:
                for n in graph.out_k[(v, k)]:
                    yield l, n, v, limited
        if node.kind in ("start", "end"):
            p = graph.instance.trip(node.owner).user_id
            for l in graph.user_in[(v, p)]:
                for n in graph.user_out[(v, p)]:
                    yield l, n, v, limited


def big_m(graph: Graph) -> int:
    s = max((n.service_time for n in graph.nodes.values()), default=0)
    t = max((l.t for l in graph.legs), default=0)
    return graph.horizon + s + t + graph.max_wait


def assemble_m3(graph: Graph, h: Optional[int] = None, H: Optional[int] = None) -> AssembledProblem:
    if graph.variant not in ("M3", "M4"):
        raise ValueError("assemble_m3 expects an M3 or M4 graph")
    return _assemble_timed(graph, h, H, intervals=False)


def assemble_m4(graph: Graph, h: Optional[int] = None, H: Optional[int] = None) -> AssembledProblem:
    if graph.variant != "M4":
        raise ValueError("assemble_m4 expects an M4 graph")
    return _assemble_timed(graph, h, H, intervals=True)


def _assemble_timed(graph, h, H, intervals):
    h = graph.max_wait if h is None else h
    H = graph.horizon if H is None else H
    variant = "M4" if intervals else "M3"
    m, cost, pref = _base(graph, f"{variant}_{graph.instance.name}")
    _cover_and_flow(m, graph)
    _user_flow(m, graph)
    n = len(graph.legs)
    for l in graph.legs:
        m.add_var(f"tau{l.id}", CONTINUOUS, 0.0, min(H, l.e) if intervals else H)
    for l in graph.legs:
        m.add_constr({n + l.id: 1, l.id: -H}, LE, 0, f"late_{l.id}")
        if intervals and l.o > 0:
            m.add_constr({l.id: l.o, n + l.id: -1}, LE, 0, f"early_{l.id}")
    M = graph.horizon + max((x.service_time for x in graph.nodes.values()), default=0) \
        + max((x.t for x in graph.legs), default=0) + h
    for a, b, v, limited in timing_pairs(graph):
        gap = graph.legs[a].t + graph.nodes[v].service_time
        m.add_constr({n + a: 1, n + b: -1, a: M, b: M}, LE, 2 * M - gap, f"prec_{a}_{b}")
        if limited:
            m.add_constr({n + b: 1, n + a: -1, a: M, b: M}, LE, gap + h + 2 * M, f"wait_{a}_{b}")
    return AssembledProblem(m, graph, variant, cost, pref, timed=True)


def assemble_m4b(graph: Graph, max_tasks: int = MAX_SUBTOUR_TASKS) -> AssembledProblem:
    """Binary model; timing is left to lazy separation."""
    if graph.variant != "M4":
        raise ValueError("assemble_m4b expects an M4 graph")
    for r in graph.instance.trips:
        if len(r.tasks) > max_tasks:
            raise ValueError(f"trip {r.id} has {len(r.tasks)} tasks; subtour enumeration allows {max_tasks}")
    m, cost, pref = _base(graph, f"M4b_{graph.instance.name}")
    _cover_and_flow(m, graph)
    _user_flow(m, graph)
    for r in graph.instance.trips:
        qs = [f"Q:{q.id}" for q in r.tasks]
        for size in range(2, len(qs) + 1):
            for subset in itertools.combinations(qs, size):
                row = {i: 1 for y in subset for z in subset if y != z for i in graph.by_pair[(y, z)]}
                m.add_constr(row, LE, size - 1, f"sec_{r.id}_{'_'.join(subset)}")
    return AssembledProblem(m, graph, "M4B", cost, pref)


ASSEMBLERS = {"M1": assemble_m1, "M2": assemble_m1, "M3": assemble_m3, "M4": assemble_m4, "M4B": assemble_m4b}


def assemble(graph: Graph, variant: str) -> AssembledProblem:
    return ASSEMBLERS[variant.upper()](graph)


# --------------------------------------------------------------------------
# valid inequalities


def valid_inequality_rows(problem: AssembledProblem, level: str) -> list[tuple[dict, str, float, str]]:
    if level not in VI_LEVELS:
        raise ValueError(f"unknown level {level!r}")
    if level == "none":
        return []
    g = problem.graph
    inst = g.instance
    mots = [mt.kind for mt in inst.mots]
    rows = []
    tn = g.trip_nodes()
    for v in tn:
        for k in mots:
            row = {i: 1 for i in g.out_k[(v, k)]}
            for k2 in mots:
                if k2 != k:
                    row.update({i: 1 for i in g.in_k[(v, k2)]})
            rows.append((row, EQ, 1, f"vi_mot_{v}_{k}"))
        rows.append(({i: 1 for k in mots for i in g.in_k[(v, k)]}, EQ, 1, f"vi_in_{v}"))
    car_in = {i for r in inst.trips for i in g.in_k[(f"A:{r.id}", "car")]}
    car_out = {i for d in inst.depots for i in g.out_k[(f"D:{d.id}", "car")]}
    if car_out:
        row = {i: 1 for i in car_in}
        for i in car_out:
            row[i] = row.get(i, 0) - 1
        rows.append((row, GE, 0, "vi_car_chain"))
    for r in inst.trips:
        rows.append(({i: 1 for i in g.by_trip[r.id]}, GE, len(r.tasks) + 1, f"vi_trip_{r.id}"))
    if g.has_users:
        for u in inst.users:
            legs = {i: 1 for i in g.by_user[u.id]}
            rows.append((legs, GE, 4, f"vi_min_legs_{u.id}"))
            rows.append((legs, EQ, len(g.user_nodes(u.id)) - 1, f"vi_legs_{u.id}"))
    for r in inst.trips:
        qs = [f"Q:{q.id}" for q in r.tasks]
        for y, z in itertools.combinations(qs, 2):
            legs = g.by_pair[(y, z)] + g.by_pair[(z, y)]
            rows.append(({i: 1 for i in legs}, LE, 1, f"vi_dir_{y}_{z}"))
    if level == "m4_set" and g.variant == "M4":
        rows += _interval_rows(g)
    return rows


def _interval_rows(g: Graph):
    """Pairwise time-incompatibility rows between in- and out-legs of a node."""
    h = g.max_wait
    incompatible = {"rise": [], "wait": [], "reach": []}
    for a, b, v, limited in timing_pairs(g):
        la, lb = g.legs[a], g.legs[b]
        if la.kind in FIRST_LEGS:
            continue
        gap = la.t + g.nodes[v].service_time
        if lb.o < la.o and lb.e < la.e and lb.e < la.o + gap:
            incompatible["rise"].append((a, b))
        if limited and lb.o > la.e + gap + h:
            incompatible["wait"].append((a, b))
        if la.o + gap > lb.e:
            incompatible["reach"].append((a, b))

    def layer(i):
        l = g.legs[i]
        return l.m if l.m is not None else ("user", l.u)

    rows, seen = [], set()
    for fam, pairs in incompatible.items():
        # legs grouped with an anchor must share one flow layer, where at most one is selected
        by_in, by_out = {}, {}
        for a, b in pairs:
            by_in.setdefault((a, layer(b)), []).append(b)
            by_out.setdefault((b, layer(a)), []).append(a)
        for side, groups in (("in", by_in), ("out", by_out)):
            for (anchor, _), others in groups.items():
                key = (anchor, tuple(sorted(others)))
                if key in seen:
                    continue
                seen.add(key)
                row = {anchor: 1}
                row.update({o: 1 for o in others})
                rows.append((row, LE, 1, f"vi_{fam}_{side}_{anchor}"))
    return rows


def add_valid_inequalities(problem: AssembledProblem, level: str) -> AssembledProblem:
    """Append the valid-inequality rows of ``level`` to the problem's model."""
    if problem.variant == "M1":
        return problem
    rows = valid_inequality_rows(problem, level)
    for coeffs, sense, rhs, name in rows:
        problem.model.add_constr(coeffs, sense, rhs, name)
    problem.vi_rows = rows
    problem.vi_level = level
    return problem


# --------------------------------------------------------------------------
# warm start


def warm_start(problem: AssembledProblem) -> np.ndarray:
    """Stored task orders, every trip on public transport, users travelling ASAP.

    Departure variables are left as NaN for the solver to complete.
    """
    g = problem.graph
    inst = g.instance
    x = np.zeros(problem.model.n_vars)
    if problem.timed:
        x[problem.n_legs:] = np.nan
    clock = {}

    def pick(y, z, kind_filter, at):
        ids = [i for i in g.by_pair[(y, z)] if kind_filter(g.legs[i])]
        for i in ids:
            if g.legs[i].o <= at <= g.legs[i].e:
                return g.legs[i]
        raise ValueError(f"warm start: no leg {y}->{z} usable at {at}")

    for u in inst.users:
        now = 0
        trips = inst.trips_of(u.id)
        prev = None
        for r in trips:
            a, b = f"A:{r.id}", f"B:{r.id}"
            if g.has_users:
                if prev is None:
                    x[pick(f"G:{u.id}", a, lambda l: True, 0).id] = 1
                else:
                    link = pick(f"B:{prev.id}", a, lambda l: l.kind == USER_LINK, now)
                    x[link.id] = 1
                    now += link.t
            x[pick(f"D:{r.start_depot}", a, lambda l: l.m == "public", now).id] = 1
            seq = [a] + [f"Q:{q.id}" for q in r.tasks] + [b]
            for y, z in zip(seq, seq[1:]):
                leg = pick(y, z, lambda l: l.m == "public", now)
                x[leg.id] = 1
                now += leg.t + g.nodes[z].service_time
            x[pick(b, f"D:{r.end_depot}", lambda l: l.m == "public", now).id] = 1
            prev = r
        if g.has_users:
            x[pick(f"B:{prev.id}", f"F:{u.id}", lambda l: l.kind == SINK, now).id] = 1
    return x
