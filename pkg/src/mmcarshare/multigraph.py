"""Leg multigraphs for the four model variants.

Node ids are prefixed by kind: ``D:`` depot, ``A:`` trip start, ``Q:`` task,
``B:`` trip end, ``G:`` user source and ``F:`` user sink.

Legs fall into two layers. MOT-layer legs carry a mode (trip legs, depot legs
and car-connection legs) and form the flow of vehicles. User-layer legs
(source, sink and user-connection legs) carry ``m = None`` and, together with
the trip legs, form each user's route. Trip legs therefore belong to both.
"""

from __future__ import annotations

import io
from collections import defaultdict
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

from .instance import (
    MOTS,
    Instance,
    TimePeriod,
    apply_beta,
    base_preference,
    period_preference,
    reference_schedule,
    round_half_up,
    travel_metrics,
    user_link_time,
)

VARIANTS = ("M1", "M2", "M3", "M4")

# leg kinds
DEPOT_OUT, TRIP, DEPOT_IN, CAR_LINK = "depot_out", "trip", "depot_in", "car_link"
SOURCE, SINK, USER_LINK = "source", "sink", "user_link"
USER_LAYER = frozenset({TRIP, SOURCE, SINK, USER_LINK})
# first leg of a vehicle or user route; its departure is never constrained
FIRST_LEGS = frozenset({DEPOT_OUT, SOURCE})


@dataclass(frozen=True, slots=True)
class Node:
    id: str
    kind: str  # depot | start | task | end | source | sink
    owner: str
    service_time: int = 0
    location: tuple[int, int] = (0, 0)


@dataclass(frozen=True, slots=True)
class Leg:
    id: int
    u: Optional[str]
    y: str
    z: str
    m: Optional[str]
    c: int
    theta: int
    t: int
    o: int
    e: int
    kind: str

    @property
    def base(self) -> tuple:
        """Key shared by all time duplicates of one leg."""
        return (self.y, self.z, self.m, self.kind, self.u)


class Graph:
    """Nodes, legs and the incidence indexes used by the models and separation."""

    def __init__(self, variant: str, instance: Instance, nodes: Sequence[Node], legs: Sequence[Leg],
                 reduced: bool = False):
        self.variant = variant
        self.instance = instance
        self.reduced = reduced
        self.horizon = instance.horizon
        self.max_wait = instance.max_wait
        self.nodes = {n.id: n for n in nodes}
        self.legs = [replace(l, id=i) for i, l in enumerate(legs)]
        self.out_k = defaultdict(list)
        self.in_k = defaultdict(list)
        self.user_out = defaultdict(list)
        self.user_in = defaultdict(list)
        self.by_user = defaultdict(list)
        self.by_trip = defaultdict(list)
        self.by_pair = defaultdict(list)
        self.dups = defaultdict(list)
        trip_of = {}
        for r in instance.trips:
            trip_of[f"A:{r.id}"] = r.id
            trip_of[f"B:{r.id}"] = r.id
            for q in r.tasks:
                trip_of[f"Q:{q.id}"] = r.id
        self.trip_of = trip_of
        for l in self.legs:
            if l.y not in self.nodes or l.z not in self.nodes:
                raise ValueError(f"leg {l.id} references an unknown node")
            if l.m is not None:
                self.out_k[(l.y, l.m)].append(l.id)
                self.in_k[(l.z, l.m)].append(l.id)
            if l.kind in USER_LAYER:
                self.user_out[(l.y, l.u)].append(l.id)
                self.user_in[(l.z, l.u)].append(l.id)
                self.by_user[l.u].append(l.id)
            if l.kind == TRIP:
                self.by_trip[trip_of[l.y]].append(l.id)
            self.by_pair[(l.y, l.z)].append(l.id)
            self.dups[l.base].append(l.id)
        for ids in self.dups.values():
            ids.sort(key=lambda i: self.legs[i].o)

    @property
    def has_users(self) -> bool:
        return self.variant in ("M3", "M4")

    def trip_nodes(self):
        """V' restricted to trip nodes (a, q, b) in a stable order."""
        out = []
        for r in self.instance.trips:
            out.append(f"A:{r.id}")
            out.extend(f"Q:{q.id}" for q in r.tasks)
            out.append(f"B:{r.id}")
        return out

    def user_nodes(self, p: str):
        """V_p: the user's source, sink and trip nodes."""
        nodes = [f"G:{p}", f"F:{p}"] if self.has_users else []
        for r in self.instance.trips_of(p):
            nodes += [f"A:{r.id}", f"B:{r.id}"] + [f"Q:{q.id}" for q in r.tasks]
        return nodes

    def duplicates(self, leg_id: int) -> list[int]:
        return self.dups[self.legs[leg_id].base]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,u,y,z,m,c,theta,t,o,e\n")
        for l in self.legs:
            buf.write(f"{l.id},{l.u or ''},{l.y},{l.z},{l.m or ''},{l.c},{l.theta},{l.t},{l.o},{l.e}\n")
        return buf.getvalue()

    def __repr__(self):
        return f"Graph({self.variant}, nodes={len(self.nodes)}, legs={len(self.legs)})"


def weighted_leg_value(periods: Sequence[TimePeriod], values: Sequence, departure: int,
                       duration: int) -> int:
    """Time-weighted average of per-period ``values`` over [departure, departure+duration].

    ``values[i]`` belongs to ``periods[i]``. Time past the last period's end
    counts towards the last period. Ties round half up.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0:
        for p, v in zip(periods, values):
            if p.start <= departure < p.end:
                return round_half_up(v)
        return round_half_up(values[-1])
    lo, hi = departure, departure + duration
    total = Fraction(0)
    last = len(periods) - 1
    for i, (p, v) in enumerate(zip(periods, values)):
        end = hi if i == last else p.end
        overlap = min(hi, end) - max(lo, p.start)
        if overlap > 0:
            total += overlap * Fraction(v)
    return round_half_up(total / duration)


# --------------------------------------------------------------------------
# builders


def _nodes(inst: Instance, with_users: bool) -> list[Node]:
    nodes = [Node(f"D:{d.id}", "depot", d.id, 0, d.location) for d in inst.depots]
    for r in inst.trips:
        nodes.append(Node(f"A:{r.id}", "start", r.id, 0, inst.depot(r.start_depot).location))
        nodes += [Node(f"Q:{q.id}", "task", r.id, q.service_time, q.location) for q in r.tasks]
        nodes.append(Node(f"B:{r.id}", "end", r.id, 0, inst.depot(r.end_depot).location))
    if with_users:
        for u in inst.users:
            nodes += [Node(f"G:{u.id}", "source", u.id), Node(f"F:{u.id}", "sink", u.id)]
    return nodes


def _trip_pairs(r, all_pairs: bool):
    a, b = f"A:{r.id}", f"B:{r.id}"
    qs = [f"Q:{q.id}" for q in r.tasks]
    if not all_pairs:
        seq = [a] + qs + [b]
        return list(zip(seq, seq[1:]))
    pairs = [(a, q) for q in qs]
    pairs += [(q1, q2) for q1 in qs for q2 in qs if q1 != q2]
    pairs += [(q, b) for q in qs]
    return pairs


@dataclass(frozen=True)
class _Proto:
    """A base leg before weights are fixed: per-period data for trip legs."""
    u: Optional[str]
    y: str
    z: str
    m: Optional[str]
    kind: str
    base_cost: int = 0
    base_time: int = 0
    base_pref: int = 0
    t: int = 0  # fixed time for artificial legs


def _protos(inst: Instance, variant: str) -> list[_Proto]:
    untimed = variant in ("M1", "M2")
    loc = {n.id: n.location for n in _nodes(inst, False)}
    out = []
    for r in inst.trips:
        user = inst.user(r.user_id)
        for y, z in _trip_pairs(r, not untimed):
            for k in MOTS:
                _, minutes, cost = travel_metrics(loc[y], loc[z], inst.mot(k))
                out.append(_Proto(r.user_id, y, z, k, TRIP, cost, minutes, base_preference(user, k)))
        for k in MOTS:
            out.append(_Proto(None, f"D:{r.start_depot}", f"A:{r.id}", k, DEPOT_OUT))
            out.append(_Proto(None, f"B:{r.id}", f"D:{r.end_depot}", k, DEPOT_IN))
    sched = {r.id: reference_schedule(inst, r) for r in inst.trips}
    for r1 in inst.trips:
        for r2 in inst.trips:
            if r1.id == r2.id or r1.end_depot != r2.start_depot:
                continue
            if untimed and sched[r2.id][0] < sched[r1.id][1]:
                continue
            out.append(_Proto(None, f"B:{r1.id}", f"A:{r2.id}", "car", CAR_LINK))
    if not untimed:
        for u in inst.users:
            trips = inst.trips_of(u.id)
            for r in trips:
                out.append(_Proto(u.id, f"G:{u.id}", f"A:{r.id}", None, SOURCE))
                out.append(_Proto(u.id, f"B:{r.id}", f"F:{u.id}", None, SINK))
            for r1 in trips:
                for r2 in trips:
                    if r1.id != r2.id:
                        g = user_link_time(inst, r1.end_depot, r2.start_depot)
                        out.append(_Proto(u.id, f"B:{r1.id}", f"A:{r2.id}", None, USER_LINK, t=g))
    return out


def _period_values(inst: Instance, p: _Proto):
    user = inst.user(p.u)
    costs, times, prefs = [], [], []
    for per in inst.periods:
        c, t = apply_beta(p.base_cost, p.base_time, p.m, per)
        costs.append(c)
        times.append(t)
        prefs.append(period_preference(user, p.m, per))
    return costs, times, prefs


def _static_leg(inst: Instance, p: _Proto) -> Leg:
    if p.kind == TRIP:
        return Leg(0, p.u, p.y, p.z, p.m, p.base_cost, p.base_pref, p.base_time, 0, inst.horizon, p.kind)
    return Leg(0, p.u, p.y, p.z, p.m, 0, 0, p.t, 0, inst.horizon, p.kind)


def build_graph_m1(instance: Instance) -> Graph:
    """Fixed task sequences, base weights, car connections only between co-located trips
    whose reference schedules leave the car free in time."""
    legs = [_static_leg(instance, p) for p in _protos(instance, "M1")]
    return Graph("M1", instance, _nodes(instance, False), legs)


def _trip_departures(inst: Instance) -> dict[str, int]:
    dep = {}
    for r in inst.trips:
        dep[f"A:{r.id}"] = reference_schedule(inst, r)[0]
        for q in r.tasks:
            dep[f"Q:{q.id}"] = q.fixed_start + q.service_time
    return dep


def build_graph_m2(instance: Instance) -> Graph:
    """M1 topology; trip-leg weights averaged over the periods the leg's reference
    departure and travel time overlap."""
    dep = _trip_departures(instance)
    legs = []
    for p in _protos(instance, "M2"):
        if p.kind != TRIP:
            legs.append(_static_leg(instance, p))
            continue
        costs, times, prefs = _period_values(instance, p)
        d, per = dep[p.y], instance.periods
        legs.append(Leg(0, p.u, p.y, p.z, p.m,
                        weighted_leg_value(per, costs, d, p.base_time),
                        weighted_leg_value(per, prefs, d, p.base_time),
                        weighted_leg_value(per, times, d, p.base_time),
                        0, instance.horizon, TRIP))
    return Graph("M2", instance, _nodes(instance, False), legs)


def build_graph_m3(instance: Instance) -> Graph:
    """All intra-trip pairs, user sources/sinks/connections, co-located car connections."""
    legs = [_static_leg(instance, p) for p in _protos(instance, "M3")]
    return Graph("M3", instance, _nodes(instance, True), legs)


def build_graph_m4(instance: Instance) -> Graph:
    """M3 topology with every leg duplicated per alpha interval.

    A duplicate's weights are evaluated for a departure at its interval start.
    """
    alpha, n = instance.alpha, instance.n_intervals
    legs = []
    for p in _protos(instance, "M4"):
        if p.kind != TRIP:
            for i in range(n):
                legs.append(Leg(0, p.u, p.y, p.z, p.m, 0, 0, p.t, i * alpha, (i + 1) * alpha, p.kind))
            continue
        costs, times, prefs = _period_values(instance, p)
        per = instance.periods
        for i in range(n):
            d = i * alpha
            legs.append(Leg(0, p.u, p.y, p.z, p.m,
                            weighted_leg_value(per, costs, d, p.base_time),
                            weighted_leg_value(per, prefs, d, p.base_time),
                            weighted_leg_value(per, times, d, p.base_time),
                            d, d + alpha, TRIP))
    return Graph("M4", instance, _nodes(instance, True), legs)


def reduce_graph(graph: Graph) -> Graph:
    """Merge runs of adjacent duplicates with identical (c, theta, t) into one leg.

    Travel time is part of the key: duplicates with equal weights but different
    times are not interchangeable.
    """
    if graph.variant != "M4":
        raise ValueError("reduce_graph expects an M4 graph")
    legs = []
    for ids in graph.dups.values():
        run = None
        for i in ids:
            l = graph.legs[i]
            if run is not None and run.e == l.o and (run.c, run.theta, run.t) == (l.c, l.theta, l.t):
                run = replace(run, e=l.e)
            else:
                if run is not None:
                    legs.append(run)
                run = l
        legs.append(run)
    legs.sort(key=lambda l: l.id)
    return Graph("M4", graph.instance, list(graph.nodes.values()), legs, reduced=True)


BUILDERS = {"M1": build_graph_m1, "M2": build_graph_m2, "M3": build_graph_m3, "M4": build_graph_m4}


def build_graph(instance: Instance, variant: str, reduce: bool = True) -> Graph:
    variant = variant.upper()
    if variant not in BUILDERS:
        raise ValueError(f"unknown variant {variant!r}")
    g = BUILDERS[variant](instance)
    if variant == "M4" and reduce:
        g = reduce_graph(g)
    return g
