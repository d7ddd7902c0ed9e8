"""Brute-force frontier oracle and a sampler of feasible solutions.

Works from the instance alone: leg weights are re-derived from the instance
tables, departure times are searched minute by minute, and car/user
interactions are enumerated explicitly (car sets, car chains, trip orders).
Meant for tiny instances only.
"""

from __future__ import annotations

import bisect
import itertools
import random
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .instance import (
    Instance,
    apply_beta,
    base_preference,
    period_preference,
    reference_schedule,
    travel_metrics,
    user_link_time,
)
from .multigraph import weighted_leg_value

LIMITS = {"users": 3, "trips_per_user": 2, "tasks_per_trip": 3, "depots": 2}
NON_CAR = ("bike", "public")


class OracleLimitError(ValueError):
    pass


def check_limits(inst: Instance) -> None:
    if len(inst.users) > LIMITS["users"]:
        raise OracleLimitError(f"oracle handles at most {LIMITS['users']} users")
    if any(len(u.trip_ids) > LIMITS["trips_per_user"] for u in inst.users):
        raise OracleLimitError(f"oracle handles at most {LIMITS['trips_per_user']} trips per user")
    if any(len(r.tasks) > LIMITS["tasks_per_trip"] for r in inst.trips):
        raise OracleLimitError(f"oracle handles at most {LIMITS['tasks_per_trip']} tasks per trip")
    if len(inst.depots) > LIMITS["depots"]:
        raise OracleLimitError(f"oracle handles at most {LIMITS['depots']} depots")


def pareto(points) -> list[tuple[int, int]]:
    """Nondominated (cost, pref) pairs sorted by cost."""
    out = []
    for c, p in sorted(set(points)):
        if not out or p < out[-1][1]:
            out.append((c, p))
    return out


def _pareto3(triples):
    """Nondominated (E, c, p) triples."""
    out = []
    for t in sorted(set(triples)):
        if not any(o[1] <= t[1] and o[2] <= t[2] for o in out):
            out.append(t)
    return out


# --------------------------------------------------------------------------
# leg data re-derived from the instance


class _Legs:
    def __init__(self, inst: Instance, variant: str):
        self.inst = inst
        self.variant = variant
        self.loc = {}
        self.service = {}
        for r in inst.trips:
            self.loc[("A", r.id)] = inst.depot(r.start_depot).location
            self.loc[("B", r.id)] = inst.depot(r.end_depot).location
            for q in r.tasks:
                self.loc[("Q", q.id)] = q.location
                self.service[("Q", q.id)] = q.service_time
        self.ref_dep = {}
        for r in inst.trips:
            self.ref_dep[("A", r.id)] = reference_schedule(inst, r)[0]
            for q in r.tasks:
                self.ref_dep[("Q", q.id)] = q.fixed_start + q.service_time

    def s(self, node):
        return self.service.get(node, 0)

    def base(self, y, z, k, user):
        _, t, c = travel_metrics(self.loc[y], self.loc[z], self.inst.mot(k))
        return c, base_preference(user, k), t

    def per_period(self, y, z, k, user):
        c0, _, t0 = self.base(y, z, k, user)
        cs, ts, ps = [], [], []
        for per in self.inst.periods:
            c, t = apply_beta(c0, t0, k, per)
            cs.append(c)
            ts.append(t)
            ps.append(period_preference(user, k, per))
        return cs, ts, ps, t0

    def static(self, y, z, k, user):
        """(c, pref, t) for the untimed variants."""
        if self.variant in ("M1", "M3"):
            return self.base(y, z, k, user)
        cs, ts, ps, t0 = self.per_period(y, z, k, user)
        d, per = self.ref_dep[y], self.inst.periods
        return (weighted_leg_value(per, cs, d, t0), weighted_leg_value(per, ps, d, t0),
                weighted_leg_value(per, ts, d, t0))

    def dups(self, y, z, k, user):
        """[(o, e, c, pref, t)] per alpha interval."""
        cs, ts, ps, t0 = self.per_period(y, z, k, user)
        a, per = self.inst.alpha, self.inst.periods
        return [(j * a, (j + 1) * a, weighted_leg_value(per, cs, j * a, t0),
                 weighted_leg_value(per, ps, j * a, t0), weighted_leg_value(per, ts, j * a, t0))
                for j in range(self.inst.n_intervals)]


def _orders(r, variant):
    qs = [("Q", q.id) for q in r.tasks]
    perms = [qs] if variant in ("M1", "M2") else [list(p) for p in itertools.permutations(qs)]
    for p in perms:
        yield [("A", r.id)] + p + [("B", r.id)]


# --------------------------------------------------------------------------
# per-trip option providers


class _StaticTrip:
    """Untimed or duration-based options: (c, pref, D) per mode and order."""

    def __init__(self, legs: _Legs, r, timed: bool):
        user = legs.inst.user(r.user_id)
        self.H = legs.inst.horizon
        self.timed = timed
        self.opts = {"car": [], "other": []}
        for k in ("car", "bike", "public"):
            for seq in _orders(r, legs.variant):
                c = p = d = 0
                for y, z in zip(seq, seq[1:]):
                    lc, lp, lt = legs.static(y, z, k, user)
                    c, p, d = c + lc, p + lp, d + lt + legs.s(z)
                self.opts["car" if k == "car" else "other"].append((d, c, p, k, tuple(seq)))

    def choices(self, group, ready, need_end):
        out = []
        for d, c, p, *_ in self.opts[group]:
            end = ready + d if self.timed else 0
            if end <= self.H:
                out.append((end if need_end else 0, c, p))
        return _pareto3(out)


class _IntervalTrip:
    """Options with explicit start minute S and earliest end E over alpha duplicates."""

    def __init__(self, legs: _Legs, r):
        inst = legs.inst
        user = inst.user(r.user_id)
        self.H, self.h = inst.horizon, inst.max_wait
        self.legs, self.user, self.r = legs, user, r
        self.paths = {}  # (k, seq) -> per-leg duplicate lists
        groups = {"car": defaultdict(list), "other": defaultdict(list)}
        for k in ("car", "bike", "public"):
            for seq in _orders(r, legs.variant):
                dl = [legs.dups(y, z, k, user) for y, z in zip(seq, seq[1:])]
                serv = [legs.s(z) for z in seq[1:]]
                self.paths[(k, tuple(seq))] = (dl, serv)
                g = groups["car" if k == "car" else "other"]
                for S, E, c, p in self._enumerate(dl, serv):
                    g[(c, p)].append((S, E))
        self.groups = {}
        for name, g in groups.items():
            table = []
            for (c, p), se in g.items():
                best = {}
                for S, E in se:
                    if E < best.get(S, self.H + 1):
                        best[S] = E
                starts = sorted(best)
                suffix = [0] * len(starts)
                m = self.H + 1
                for i in range(len(starts) - 1, -1, -1):
                    m = min(m, best[starts[i]])
                    suffix[i] = m
                table.append((c, p, starts, suffix))
            self.groups[name] = table

    def _enumerate(self, dl, serv):
        out = []
        for S in range(self.H + 1):
            for o, e, c, p, t in dl[0]:
                if o <= S <= e:
                    self._extend(dl, serv, 1, S, S, S, t, c, p, out)
        return out

    def _extend(self, dl, serv, i, S, lo, hi, t_prev, c, p, out):
        # [lo, hi]: feasible departures of leg i-1 given start S; t_prev its travel time
        if i == len(dl):
            if lo + t_prev <= self.H:
                out.append((S, lo + t_prev, c, p))
            return
        w_lo = lo + t_prev + serv[i - 1]
        w_hi = hi + t_prev + serv[i - 1] + self.h
        for o, e, dc, dp, t in dl[i]:
            a, b = max(o, w_lo), min(e, w_hi)
            if a <= b:
                self._extend(dl, serv, i + 1, S, a, b, t, c + dc, p + dp, out)

    def choices(self, group, ready, need_end):
        out = []
        for c, p, starts, suffix in self.groups[group]:
            i = bisect.bisect_left(starts, ready)
            if i < len(starts):
                out.append((suffix[i] if need_end else 0, c, p))
        return _pareto3(out)


# --------------------------------------------------------------------------
# skeleton enumeration


def _chain_ok(inst, prev, nxt, variant, sched):
    if prev.end_depot != nxt.start_depot:
        return False
    if variant in ("M1", "M2") and sched[nxt.id][0] < sched[prev.id][1]:
        return False
    return True


def _covers(inst: Instance, car_trips, variant):
    """Sets of car chains covering ``car_trips`` within depot capacities."""
    sched = {r.id: reference_schedule(inst, r) for r in inst.trips}
    trips = {r.id: r for r in inst.trips}
    ids = sorted(car_trips)
    seen = set()
    for perm in itertools.permutations(ids):
        for cuts in itertools.product((0, 1), repeat=max(0, len(perm) - 1)):
            chains, cur = [], [perm[0]] if perm else []
            for nxt, cut in zip(perm[1:], cuts):
                if cut:
                    chains.append(tuple(cur))
                    cur = [nxt]
                else:
                    cur.append(nxt)
            if cur:
                chains.append(tuple(cur))
            key = frozenset(chains)
            if key in seen:
                continue
            seen.add(key)
            if all(_chain_ok(inst, trips[a], trips[b], variant, sched)
                   for ch in chains for a, b in zip(ch, ch[1:])) and _capacity_ok(inst, chains, trips):
                yield chains


def _capacity_ok(inst, chains, trips):
    starts, ends = defaultdict(int), defaultdict(int)
    for ch in chains:
        starts[trips[ch[0]].start_depot] += 1
        ends[trips[ch[-1]].end_depot] += 1
    for d in inst.depots:
        w, wb = d.start_count("car"), d.end_count("car")
        if (w is not None and starts[d.id] > w) or (wb is not None and ends[d.id] > wb):
            return False
    return True


def _user_orders(inst: Instance, variant):
    if variant in ("M1", "M2"):
        yield ()
        return
    per_user = [list(itertools.permutations(u.trip_ids)) for u in inst.users]
    yield from itertools.product(*per_user)


def _dag(inst, chains, orders):
    trips = {r.id: r for r in inst.trips}
    edges = {}
    for ch in chains:
        for a, b in zip(ch, ch[1:]):
            edges[(a, b)] = max(edges.get((a, b), 0), 0)
    for order in orders:
        for a, b in zip(order, order[1:]):
            g = user_link_time(inst, trips[a].end_depot, trips[b].start_depot)
            edges[(a, b)] = max(edges.get((a, b), 0), g)
    preds, succs = defaultdict(list), defaultdict(list)
    for (a, b), g in edges.items():
        preds[b].append((a, g))
        succs[a].append(b)
    # topological order, None on a cycle
    indeg = {r.id: len(preds[r.id]) for r in inst.trips}
    queue = sorted(r for r, d in indeg.items() if d == 0)
    order = []
    while queue:
        r = queue.pop(0)
        order.append(r)
        for s in succs[r]:
            indeg[s] -= 1
            if indeg[s] == 0:
                queue.append(s)
    if len(order) != len(inst.trips):
        return None
    return order, preds, succs


def _dp(order, preds, succs, providers, car_set):
    states = {(): [(0, 0)]}
    done = set()
    for r in order:
        done.add(r)
        group = "car" if r in car_set else "other"
        need_end = bool(succs[r])
        nxt = defaultdict(list)
        cache = {}
        for state, labels in states.items():
            emap = dict(state)
            ready = max([emap[p] + g for p, g in preds[r]] + [0])
            if ready not in cache:
                cache[ready] = providers[r].choices(group, ready, need_end)
            keep = {p: e for p, e in emap.items() if not all(s in done for s in succs[p])}
            for end, c, p in cache[ready]:
                m = dict(keep)
                if need_end:
                    m[r] = end
                key = tuple(sorted(m.items()))
                nxt[key].extend((c0 + c, p0 + p) for c0, p0 in labels)
        states = {k: pareto(v) for k, v in nxt.items()}
    return [pt for labels in states.values() for pt in labels]


def _providers(inst, variant):
    legs = _Legs(inst, variant)
    if variant == "M4":
        return {r.id: _IntervalTrip(legs, r) for r in inst.trips}
    return {r.id: _StaticTrip(legs, r, timed=variant == "M3") for r in inst.trips}


def brute_force_points(inst: Instance, variant: str) -> list[tuple[int, int]]:
    """Nondominated (cost, pref) pairs of ``variant`` (M4B is treated as M4)."""
    check_limits(inst)
    variant = {"M4B": "M4"}.get(variant.upper(), variant.upper())
    if variant not in ("M1", "M2", "M3", "M4"):
        raise ValueError(f"unknown variant {variant!r}")
    providers = _providers(inst, variant)
    ids = [r.id for r in inst.trips]
    found = []
    for n_car in range(len(ids) + 1):
        for car_set in itertools.combinations(ids, n_car):
            for chains in _covers(inst, car_set, variant):
                for orders in _user_orders(inst, variant):
                    dag = _dag(inst, chains, orders)
                    if dag is None:
                        continue
                    found = pareto(found + _dp(*dag, providers, set(car_set)))
    return found


# --------------------------------------------------------------------------
# sampling feasible leg selections


@dataclass
class Sample:
    x: np.ndarray
    user_routes: dict  # user -> ordered leg ids
    car_routes: list  # ordered leg ids per car


def _find(graph, y, z, m, kind, o_lo, o_hi=None, at=None):
    """Leg y->z whose interval covers [o_lo, o_hi] (or the point ``at``)."""
    for i in graph.by_pair[(y, z)]:
        l = graph.legs[i]
        if l.m != m or l.kind != kind:
            continue
        if at is not None:
            if l.o <= at <= l.e:
                return l
        elif l.o <= o_lo and o_hi <= l.e:
            return l
    raise LookupError(f"no leg {y}->{z} ({m}, {kind}) for time {at if at is not None else (o_lo, o_hi)}")


def sample_feasible_solutions(inst: Instance, graph, n: int, seed: int = 0, max_tries: int = 2000):
    """Random feasible solutions of the M3 or M4 problem, as leg selections of ``graph``.

    Each sample fixes car chains, user trip orders, modes, task orders and (for
    M4) duplicate intervals, schedules everything as early as the random
    choices allow and keeps it only when it fits the horizon.
    """
    rng = random.Random(seed)
    variant = graph.variant
    legs = _Legs(inst, variant)
    trips = {r.id: r for r in inst.trips}
    out = []
    for _ in range(max_tries):
        if len(out) >= n:
            break
        car_set = {r for r in trips if rng.random() < 0.4}
        covers = list(_covers(inst, car_set, variant))
        if not covers:
            continue
        chains = rng.choice(covers)
        orders = tuple(tuple(rng.sample(u.trip_ids, len(u.trip_ids))) for u in inst.users)
        dag = _dag(inst, chains, orders)
        if dag is None:
            continue
        s = _sample_schedule(inst, graph, legs, dag, car_set, chains, orders, rng)
        if s is not None:
            out.append(s)
    return out


def _sample_schedule(inst, graph, legs, dag, car_set, chains, orders, rng):
    order, preds, succs = dag
    H, h = inst.horizon, inst.max_wait
    ends, chosen = {}, {}
    for rid in order:
        r = inst.trip(rid)
        user = inst.user(r.user_id)
        ready = max([ends[p] + g for p, g in preds[rid]] + [0])
        k = "car" if rid in car_set else rng.choice(NON_CAR)
        seq = rng.choice(list(_orders(r, graph.variant)))
        start = ready + rng.choice([0, 0, 5, 20, 60])
        path = []
        now = start
        for y, z in zip(seq, seq[1:]):
            if graph.variant == "M4":
                opts = [d for d in legs.dups(y, z, k, user) if d[0] <= now <= d[1] or d[0] > now]
                opts.sort(key=lambda d: d[0])
                if not opts:
                    return None
                o, e, c, p, t = opts[0] if rng.random() < 0.7 else rng.choice(opts[:3])
                dep = max(now, o)
                if dep > e or (path and dep > now + h):
                    return None
            else:
                c, p, t = legs.static(y, z, k, user)
                o, e, dep = 0, H, now
            path.append((y, z, k, o, e, dep, t))
            now = dep + t + legs.s(z)
        if now > H:
            return None
        ends[rid] = now
        chosen[rid] = (k, path)
    x = np.zeros(len(graph.legs))
    tag = lambda n: f"{n[0]}:{n[1]}"
    for rid, (k, path) in chosen.items():
        r = inst.trip(rid)
        for y, z, m, o, e, dep, t in path:
            x[_find(graph, tag(y), tag(z), m, "trip", o, e).id] = 1
        if k != "car":
            x[_find(graph, f"D:{r.start_depot}", f"A:{rid}", k, "depot_out", 0, at=0).id] = 1
            x[_find(graph, f"B:{rid}", f"D:{r.end_depot}", k, "depot_in", 0, at=ends[rid]).id] = 1
    car_routes = []
    for ch in chains:
        first = inst.trip(ch[0])
        ids = [_find(graph, f"D:{first.start_depot}", f"A:{ch[0]}", "car", "depot_out", 0, at=0).id]
        for i, rid in enumerate(ch):
            ids += _trip_path_ids(graph, chosen[rid][1])
            if i + 1 < len(ch):
                ids.append(_find(graph, f"B:{rid}", f"A:{ch[i + 1]}", "car", "car_link", 0, at=ends[rid]).id)
        ids.append(_find(graph, f"B:{ch[-1]}", f"D:{inst.trip(ch[-1]).end_depot}", "car", "depot_in", 0,
                         at=ends[ch[-1]]).id)
        x[ids] = 1
        car_routes.append(ids)
    user_routes = {}
    for u, order in zip(inst.users, orders):
        ids = [_find(graph, f"G:{u.id}", f"A:{order[0]}", None, "source", 0, at=0).id]
        x[ids[0]] = 1
        for i, rid in enumerate(order):
            ids += _trip_path_ids(graph, chosen[rid][1])
            nxt = (f"A:{order[i + 1]}", "user_link") if i + 1 < len(order) else (f"F:{u.id}", "sink")
            leg = _find(graph, f"B:{rid}", nxt[0], None, nxt[1], 0, at=ends[rid])
            x[leg.id] = 1
            ids.append(leg.id)
        user_routes[u.id] = ids
    return Sample(x, user_routes, car_routes)


def _trip_path_ids(graph, path):
    tag = lambda n: f"{n[0]}:{n[1]}"
    return [_find(graph, tag(y), tag(z), m, "trip", o, e).id for y, z, m, o, e, dep, t in path]
