"""Pareto-frontier enumeration: epsilon-constraint and weighting binary search.

Both objectives are integer, so strict improvements are written as ``<= v - 1``.
With ``propagate_cuts`` every separation cut found in any solve becomes a hard
row of every later model.
"""

from __future__ import annotations

import io
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import oracle
from .mip_core import LE, HighsBackend, LinearConstraint, solve
from .models import AssembledProblem, warm_start
from .separation import CutRecord, M4bSeparator

CSV_HEADER = "cost,preference,solve_seconds,cuts_user,cuts_car,cuts_sync,trips_car,trips_bike,trips_public"
STAGES = ("user", "car", "sync")


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class ParetoPoint:
    cost: int
    preference: int
    solution: Optional[np.ndarray] = None
    solve_seconds: float = 0.0
    cuts: dict = field(default_factory=lambda: dict.fromkeys(STAGES, 0))
    trips_by_mot: dict = field(default_factory=dict)

    @property
    def pair(self) -> tuple[int, int]:
        return self.cost, self.preference


@dataclass
class Frontier:
    points: list
    method: str
    truncated: bool = False
    seconds: float = 0.0
    cuts_per_solve: list = field(default_factory=list)
    cut_log: list = field(default_factory=list)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [p.pair for p in self.points]

    @property
    def total_cuts(self) -> int:
        return sum(self.cuts_per_solve)

    def __len__(self):
        return len(self.points)


class _Runner:
    """Shared solve plumbing: objective vectors, bounds, carried cuts, budget."""

    def __init__(self, problem: AssembledProblem, propagate_cuts: bool, time_limit: Optional[float],
                 node_limit: Optional[int] = None):
        self.p = problem
        self.propagate = propagate_cuts
        self.carried: list[LinearConstraint] = []
        self.deadline = None if time_limit is None else time.perf_counter() + time_limit
        self.node_limit = node_limit
        self.cuts_per_solve: list[int] = []
        self.cut_log: list[CutRecord] = []
        self.calls = 0
        self.spans: dict[str, int] = {}
        self.warm = warm_start(problem)
        n = problem.model.n_vars
        self.vec = {"cost": self._pad(problem.cost, n), "pref": self._pad(problem.pref, n)}

    @staticmethod
    def _pad(v, n):
        out = np.zeros(n)
        out[: len(v)] = v
        return out

    def row(self, weights: dict, rhs: int) -> LinearConstraint:
        """sum_k weights[k] * objective_k <= rhs over leg variables."""
        coeffs = {}
        for k, w in weights.items():
            for i, c in enumerate(self.vec[k]):
                if c:
                    coeffs[i] = coeffs.get(i, 0.0) + w * c
        return LinearConstraint(coeffs, LE, rhs, "bound")

    def span(self, name: str) -> int:
        """Integer strictly above max - min of objective ``name`` over the LP relaxation."""
        if name not in self.spans:
            lp = HighsBackend(self.p.model)
            ends = []
            for sign in (1.0, -1.0):
                lp.set_objective(sign * self.vec[name])
                st, obj, _ = lp.solve()
                ends.append(sign * obj if st == "optimal" else 0.0)
            self.spans[name] = math.floor(ends[1] + 1e-6) - math.ceil(ends[0] - 1e-6) + 1
        return max(1, self.spans[name])

    def run(self, objective: dict, rows, warm=None):
        """Minimise ``objective`` (weights per objective name) under extra ``rows``."""
        m = self.p.model.copy()
        m.set_objective(sum(w * self.vec[k] for k, w in objective.items()))
        m.rows += list(rows) + list(self.carried)
        sep = M4bSeparator(self.p.graph) if self.p.needs_separation else None
        limit = None
        if self.deadline is not None:
            limit = self.deadline - time.perf_counter()
            if limit <= 0:
                raise BudgetExceeded("time budget exhausted")
        t0 = time.perf_counter()
        sol = solve(m, sep, self.warm if warm is None else warm, time_limit=limit, node_limit=self.node_limit)
        secs = time.perf_counter() - t0
        counts = dict(sep.counts) if sep else dict.fromkeys(STAGES, 0)
        if sep:
            # callback iterations are numbered across the whole enumeration
            self.cut_log += [CutRecord(self.calls + r.iteration, r.stage, r.size) for r in sep.log]
            self.calls += sep.calls
        self.cuts_per_solve.append(len(sol.cuts))
        if self.propagate:
            self.carried += sol.cuts
        if sol.status == "limit":
            raise BudgetExceeded("solver budget exhausted")
        return sol, secs, counts, sol.cuts

    def point(self, x, secs, counts) -> ParetoPoint:
        c, pr = self.p.objectives(x)
        return ParetoPoint(c, pr, np.asarray(x[: self.p.n_legs]) > 0.5, secs, counts,
                           trips_by_mot(self.p, x))


def trips_by_mot(problem: AssembledProblem, x) -> dict:
    g = problem.graph
    out = {mt.kind: 0 for mt in g.instance.mots}
    for r in g.instance.trips:
        for k in out:
            if any(x[i] > 0.5 for i in g.out_k[(f"A:{r.id}", k)]):
                out[k] += 1
    return out


def _add_counts(a, b):
    return {k: a.get(k, 0) + b.get(k, 0) for k in STAGES}


def _lexicographic(runner: _Runner, primary: str, bound: Optional[int]):
    secondary = "pref" if primary == "cost" else "cost"
    rows = [] if bound is None else [runner.row({secondary: 1}, bound)]
    # both objectives are integral: a weight above the secondary's range makes one solve lexicographic
    s, secs, counts, _ = runner.run({primary: runner.span(secondary), secondary: 1}, rows)
    if s.status == "infeasible":
        return None
    return runner.point(s.x, secs, counts)


def lexicographic_solve(problem: AssembledProblem, primary: str = "cost", bound: Optional[int] = None,
                        carried_cuts=(), time_limit: Optional[float] = None) -> Optional[ParetoPoint]:
    """min primary, then min secondary with primary fixed; ``bound`` caps the secondary."""
    if primary not in ("cost", "pref"):
        raise ValueError("primary must be 'cost' or 'pref'")
    runner = _Runner(problem, False, time_limit)
    runner.carried = list(carried_cuts)
    return _lexicographic(runner, primary, bound)


def epsilon_constraint(problem: AssembledProblem, direction: str = "cost_first", propagate_cuts: bool = True,
                       time_limit: Optional[float] = None, node_limit: Optional[int] = None) -> Frontier:
    if direction not in ("cost_first", "pref_first"):
        raise ValueError("direction must be 'cost_first' or 'pref_first'")
    primary = "cost" if direction == "cost_first" else "pref"
    runner = _Runner(problem, propagate_cuts, time_limit, node_limit)
    t0 = time.perf_counter()
    points, truncated, bound = [], False, None
    try:
        while True:
            pt = _lexicographic(runner, primary, bound)
            if pt is None:
                break
            points.append(pt)
            bound = (pt.preference if primary == "cost" else pt.cost) - 1
    except BudgetExceeded:
        truncated = True
    return _frontier(points, f"eps-{primary}", truncated, time.perf_counter() - t0, runner)


def pair_weights(a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    """Integer (cost, pref) weights levelling the segment from ``a`` to ``b``."""
    return a[1] - b[1], b[0] - a[0]


def weighting_binary_search(problem: AssembledProblem, propagate_cuts: bool = True,
                            time_limit: Optional[float] = None, node_limit: Optional[int] = None) -> Frontier:
    runner = _Runner(problem, propagate_cuts, time_limit, node_limit)
    t0 = time.perf_counter()
    points, truncated = [], False
    try:
        first = _lexicographic(runner, "cost", None)
        if first is not None:
            points.append(first)
            last = _lexicographic(runner, "pref", None)
            if last.pair != first.pair:
                points.append(last)
                queue = deque([(first, last)])
                while queue:
                    a, b = queue.popleft()
                    w1, w2 = pair_weights(a.pair, b.pair)
                    # the open box alone; a row capping the weighted sum below the segment
                    # would hide points on or above it
                    rows = [runner.row({"cost": 1}, b.cost - 1), runner.row({"pref": 1}, a.preference - 1)]
                    sol, secs, counts, _ = runner.run({"cost": w1, "pref": w2}, rows)
                    if sol.status == "infeasible":
                        continue
                    pt = runner.point(sol.x, secs, counts)
                    points.append(pt)
                    queue.append((a, pt))
                    queue.append((pt, b))
    except BudgetExceeded:
        truncated = True
    return _frontier(points, "wbs", truncated, time.perf_counter() - t0, runner)


def _frontier(points, method, truncated, seconds, runner: _Runner):
    ordered = []
    # weakly dominated repeats cannot occur under the strict bounds; filtered anyway
    for p in sorted(points, key=lambda p: (p.cost, p.preference)):
        if not ordered or p.preference < ordered[-1].preference:
            ordered.append(p)
    return Frontier(ordered, method, truncated, seconds, list(runner.cuts_per_solve), list(runner.cut_log))


def cut_log_csv(frontier: Frontier) -> str:
    lines = ["iteration,stage,size"] + [f"{r.iteration},{r.stage},{r.size}" for r in frontier.cut_log]
    return "\n".join(lines) + "\n"


def brute_force_frontier(instance, variant: str) -> Frontier:
    t0 = time.perf_counter()
    pts = [ParetoPoint(c, p) for c, p in oracle.brute_force_points(instance, variant)]
    return Frontier(pts, "oracle", False, time.perf_counter() - t0)


def verify_frontier(frontier: Frontier, problem: Optional[AssembledProblem] = None) -> Optional[str]:
    """None when the frontier is consistent, otherwise a diagnostic for the first problem."""
    pts = frontier.points
    for p in pts:
        for v in (p.cost, p.preference):
            if int(v) != v or v < 0:
                return f"point ({p.cost},{p.preference}) is not a non-negative integer pair"
    for a, b in zip(pts, pts[1:]):
        if not a.cost < b.cost:
            return f"points ({a.cost},{a.preference}) and ({b.cost},{b.preference}) out of cost order"
        if not a.preference > b.preference:
            return f"({a.cost},{a.preference}) dominates ({b.cost},{b.preference})"
    if problem is not None:
        for p in pts:
            if p.solution is None:
                continue
            sel = np.asarray(p.solution, dtype=bool)
            c, pr = int(problem.cost[sel].sum()), int(problem.pref[sel].sum())
            if (c, pr) != p.pair:
                return f"point ({p.cost},{p.preference}) re-evaluates to ({c},{pr})"
    return None


# --------------------------------------------------------------------------
# CSV


def frontier_to_csv(frontier: Frontier) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for p in frontier.points:
        t = p.trips_by_mot
        buf.write(f"{p.cost},{p.preference},{p.solve_seconds:.3f},{p.cuts.get('user', 0)},"
                  f"{p.cuts.get('car', 0)},{p.cuts.get('sync', 0)},{t.get('car', 0)},"
                  f"{t.get('bike', 0)},{t.get('public', 0)}\n")
    if frontier.truncated:
        buf.write("# truncated\n")
    return buf.getvalue()


def frontier_from_csv(text: str, method: str = "csv") -> Frontier:
    lines = [l for l in text.splitlines() if l.strip()]
    truncated = any(l.strip() == "# truncated" for l in lines)
    lines = [l for l in lines if not l.startswith("#")]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError("frontier CSV: unexpected header")
    pts = []
    for no, line in enumerate(lines[1:], 2):
        f = line.split(",")
        if len(f) != 9:
            raise ValueError(f"frontier CSV line {no}: expected 9 fields")
        try:
            pts.append(ParetoPoint(int(f[0]), int(f[1]), None, float(f[2]),
                                   dict(zip(STAGES, map(int, f[3:6]))),
                                   dict(zip(("car", "bike", "public"), map(int, f[6:9])))))
        except ValueError:
            raise ValueError(f"frontier CSV line {no}: non-numeric field") from None
    return Frontier(pts, method, truncated)
