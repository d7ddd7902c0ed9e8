"""Mixed binary/continuous linear models and a branch-and-bound solver.

Only the LP relaxation is delegated to a backend (HiGHS through ``highspy`` by
default, ``scipy.optimize.linprog`` as a slower cross-check). Branching, node
selection, incumbent handling and lazy cuts live here.

Callbacks receive every integer-feasible candidate and may answer with cuts;
cuts become global rows and the node is re-solved.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

INT_TOL = 1e-6
FEAS_TOL = 1e-6

BINARY, CONTINUOUS = "B", "C"
LE, GE, EQ = "<=", ">=", "="


@dataclass
class LinearConstraint:
    coeffs: dict
    sense: str
    rhs: float
    name: str = ""

    def lhs(self, x) -> float:
        return sum(c * x[i] for i, c in self.coeffs.items())

    def violation(self, x) -> float:
        """Amount by which ``x`` violates the row (<= 0 when satisfied)."""
        a = self.lhs(x)
        if self.sense == LE:
            return a - self.rhs
        if self.sense == GE:
            return self.rhs - a
        return abs(a - self.rhs)

    def satisfied(self, x, tol: float = FEAS_TOL) -> bool:
        return self.violation(x) <= tol


class CutError(RuntimeError):
    """A callback returned a cut its own candidate satisfies."""


class Model:
    """Minimisation model: variables with bounds/objective and sparse rows."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.names: list[str] = []
        self.kinds: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[float] = []
        self.rows: list[LinearConstraint] = []

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def add_var(self, name: str, kind: str = BINARY, lb: float = 0.0, ub: float = None,
                obj: float = 0.0) -> int:
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        elif ub is None:
            ub = math.inf
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        return len(self.names) - 1

    def add_constr(self, coeffs: dict, sense: str, rhs: float, name: str = "") -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad sense {sense!r}")
        n = self.n_vars
        for i in coeffs:
            if not 0 <= i < n:
                raise IndexError(f"row {name!r} references unknown variable {i}")
        self.rows.append(LinearConstraint({i: float(c) for i, c in coeffs.items() if c}, sense,
                                          float(rhs), name))
        return len(self.rows) - 1

    def set_objective(self, coeffs) -> None:
        self.obj = [0.0] * self.n_vars
        items = coeffs.items() if isinstance(coeffs, dict) else enumerate(coeffs)
        for i, c in items:
            self.obj[i] = float(c)

    def copy(self) -> "Model":
        m = Model(self.name)
        m.names, m.kinds = list(self.names), list(self.kinds)
        m.lb, m.ub, m.obj = list(self.lb), list(self.ub), list(self.obj)
        m.rows = list(self.rows)  # rows are never mutated in place
        return m

    def binaries(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == BINARY]

    def objective_value(self, x) -> float:
        return float(np.dot(self.obj, x))

    def is_feasible(self, x, tol: float = FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < np.array(self.lb) - tol) or np.any(x > np.array(self.ub) + tol):
            return False
        for i in self.binaries():
            if abs(x[i] - round(x[i])) > INT_TOL:
                return False
        return all(r.satisfied(x, tol) for r in self.rows)

    def write_lp(self) -> str:
        """CPLEX LP text: objective, rows, bounds and the binary section."""

        def expr(coeffs):
            parts = []
            for i, c in coeffs:
                sign = "-" if c < 0 else "+"
                parts.append(f"{sign} {abs(c):.12g} {self.names[i]}")
            s = " ".join(parts) or "0 " + (self.names[0] if self.names else "")
            return s[2:] if s.startswith("+ ") else s

        out = [f"\\ {self.name}", "Minimize", " obj: " + expr([(i, c) for i, c in enumerate(self.obj) if c]),
               "Subject To"]
        for k, r in enumerate(self.rows):
            op = {LE: "<=", GE: ">=", EQ: "="}[r.sense]
            out.append(f" {r.name or 'c'}_{k}: {expr(sorted(r.coeffs.items()))} {op} {r.rhs:.12g}")
        out.append("Bounds")
        for i, k in enumerate(self.kinds):
            if k == CONTINUOUS:
                ub = "+inf" if math.isinf(self.ub[i]) else f"{self.ub[i]:.12g}"
                out.append(f" {self.lb[i]:.12g} <= {self.names[i]} <= {ub}")
        bins = [self.names[i] for i in self.binaries()]
        if bins:
            out.append("Binaries")
            out.extend(f" {n}" for n in bins)
        out.append("End")
        return "\n".join(out) + "\n"


@dataclass
class Solution:
    status: str  # optimal | infeasible | limit
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    bound: float = -math.inf
    nodes: int = 0
    cuts: list = field(default_factory=list)
    seconds: float = 0.0


# --------------------------------------------------------------------------
# LP backends


class HighsBackend:
    """Persistent HiGHS LP; bound changes and appended rows keep the basis warm."""

    def __init__(self, model: Model):
        import highspy

        self._highspy = highspy
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        n = model.n_vars
        self.n = n
        h.addVars(n, np.array(model.lb), np.array(model.ub))
        if n:
            h.changeColsCost(n, np.arange(n, dtype=np.int32), np.array(model.obj, dtype=float))
        self.h = h
        self.add_rows(model.rows)

    def add_rows(self, rows: Sequence[LinearConstraint]) -> None:
        if not rows:
            return
        lower, upper, starts, idx, val = [], [], [], [], []
        for r in rows:
            starts.append(len(idx))
            idx.extend(r.coeffs.keys())
            val.extend(r.coeffs.values())
            lower.append(-math.inf if r.sense == LE else r.rhs)
            upper.append(math.inf if r.sense == GE else r.rhs)
        self.h.addRows(len(rows), np.array(lower), np.array(upper), len(idx),
                       np.array(starts, dtype=np.int32), np.array(idx, dtype=np.int32),
                       np.array(val, dtype=float))

    def set_bounds(self, idx: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> None:
        if len(idx):
            self.h.changeColsBounds(len(idx), idx.astype(np.int32), lb.astype(float), ub.astype(float))

    def reduced_costs(self) -> Optional[np.ndarray]:
        return np.array(self.h.getSolution().col_dual)

    def set_objective(self, c: np.ndarray) -> None:
        self.h.changeColsCost(self.n, np.arange(self.n, dtype=np.int32), np.asarray(c, dtype=float))

    def solve(self):
        h = self.h
        h.run()
        st = h.getModelStatus()
        ms = self._highspy.HighsModelStatus
        if st == ms.kOptimal:
            return "optimal", h.getInfo().objective_function_value, np.array(h.getSolution().col_value)
        if st in (ms.kInfeasible, ms.kUnboundedOrInfeasible):
            return "infeasible", None, None
        if st == ms.kUnbounded:
            raise RuntimeError("LP relaxation unbounded")
        # numerical trouble: retry once from scratch
        h.clearSolver()
        h.run()
        if h.getModelStatus() == ms.kOptimal:
            return "optimal", h.getInfo().objective_function_value, np.array(h.getSolution().col_value)
        if h.getModelStatus() == ms.kInfeasible:
            return "infeasible", None, None
        raise RuntimeError(f"LP backend failed: {h.modelStatusToString(h.getModelStatus())}")


class ScipyBackend:
    """Stateless ``linprog`` backend; rebuilds the LP for every solve."""

    def __init__(self, model: Model):
        self.c = np.array(model.obj, dtype=float)
        self.lb = np.array(model.lb, dtype=float)
        self.ub = np.array(model.ub, dtype=float)
        self.rows: list[LinearConstraint] = []
        self.add_rows(model.rows)

    def add_rows(self, rows):
        self.rows.extend(rows)

    def set_bounds(self, idx, lb, ub):
        self.lb[idx] = lb
        self.ub[idx] = ub

    def reduced_costs(self):
        return None

    def solve(self):
        from scipy.optimize import linprog
        from scipy.sparse import lil_matrix

        n = len(self.c)
        ub_rows = [r for r in self.rows if r.sense != EQ]
        eq_rows = [r for r in self.rows if r.sense == EQ]

        def mat(rows, flip):
            a = lil_matrix((len(rows), n))
            b = np.zeros(len(rows))
            for k, r in enumerate(rows):
                s = -1.0 if flip and r.sense == GE else 1.0
                for i, c in r.coeffs.items():
                    a[k, i] = s * c
                b[k] = s * r.rhs
            return a.tocsr(), b

        kw = {}
        if ub_rows:
            kw["A_ub"], kw["b_ub"] = mat(ub_rows, True)
        if eq_rows:
            kw["A_eq"], kw["b_eq"] = mat(eq_rows, False)
        bounds = list(zip(self.lb, [None if math.isinf(u) else u for u in self.ub]))
        res = linprog(self.c, bounds=bounds, method="highs", **kw)
        if res.status == 0:
            return "optimal", float(res.fun), np.array(res.x)
        if res.status == 2:
            return "infeasible", None, None
        raise RuntimeError(f"linprog failed: {res.message}")


BACKENDS = {"highs": HighsBackend, "scipy": ScipyBackend}


# --------------------------------------------------------------------------
# branch and bound

Callback = Callable[[np.ndarray], list]


def _integral_objective(model: Model) -> bool:
    for i, c in enumerate(model.obj):
        if c and (model.kinds[i] != BINARY or c != round(c)):
            return False
    return True


def _branch_var(x, bins, rule):
    frac = np.abs(x[bins] - np.round(x[bins]))
    cand = np.nonzero(frac > INT_TOL)[0]
    if not len(cand):
        return None
    if rule == "most_fractional":
        # distance to 0.5, smallest index on ties
        return int(bins[cand[np.argmin(np.abs(x[bins][cand] - 0.5))]])
    if rule == "first_fractional":
        return int(bins[cand[0]])
    raise ValueError(f"unknown branching rule {rule!r}")


def _packing_rows(model: Model, pos_of: dict) -> dict:
    """Binary position -> packing rows (all coefficients 1, rhs 1) holding it, as position arrays."""
    out: dict[int, list] = {}
    for r in model.rows:
        if r.sense == GE or r.rhs != 1 or len(r.coeffs) < 2 or any(v != 1 for v in r.coeffs.values()):
            continue
        if not all(i in pos_of for i in r.coeffs):
            continue
        members = np.array(sorted(pos_of[i] for i in r.coeffs), dtype=int)
        for p in members:
            out.setdefault(int(p), []).append(members)
    return out


def _packing_split(x, bins, rows, pos):
    """Split the fractional support of the widest packing row through ``pos`` in two halves.

    At most one member of a packing row is 1, so fixing either half to 0 partitions
    the integer solutions. None when no row carries positive mass on both sides.
    """
    best = None
    for members in rows.get(pos, ()):
        vals = x[bins[members]]
        support = members[vals > INT_TOL]
        if len(support) >= 2 and (best is None or len(support) > len(best[1])):
            best = (members, support, vals[vals > INT_TOL])
    if best is None:
        return None
    members, support, vals = best
    k = int(np.searchsorted(np.cumsum(vals), vals.sum() / 2))
    k = min(max(k, 1), len(support) - 1)
    cut = support[k]
    return members[members < cut], members[members >= cut], vals[:k].sum(), vals[k:].sum()


def solve(model: Model, callback: Optional[Callback] = None, warm_start=None, *,
          backend: str = "highs", branching: str = "most_fractional", sos: bool = True,
          node_limit: Optional[int] = None, time_limit: Optional[float] = None) -> Solution:
    """Exact best-first branch and bound (gap 0).

    With ``sos`` a fractional binary inside a set-packing row branches on halves of
    that row, which is much stronger than single variables when a row holds many
    near-identical columns.

    ``warm_start`` is a full assignment; continuous entries may be NaN and are
    then completed by an LP with the binaries fixed. A warm start that fails
    the rows or the callback only guides branching directions.
    """
    t0 = time.perf_counter()
    lp = BACKENDS[backend](model)
    bins = np.array(model.binaries(), dtype=int)
    base_lb = np.array(model.lb)[bins] if len(bins) else np.zeros(0)
    base_ub = np.array(model.ub)[bins] if len(bins) else np.zeros(0)
    integral = _integral_objective(model)
    cuts: list[LinearConstraint] = []
    inc_x, inc_obj = None, math.inf
    hint = None

    def key(bound):
        return math.ceil(bound - INT_TOL) if integral else bound

    def prunable(bound):
        return key(bound) >= inc_obj - (0 if integral else 1e-9)

    def apply(fix):
        lb, ub = base_lb.copy(), base_ub.copy()
        for pos, v in fix:
            lb[pos] = ub[pos] = v
        lp.set_bounds(bins, lb, ub)
        return lb, ub

    def reduced_cost_fixing(obj, x, lb, ub):
        """Binaries whose flip would push the bound past the incumbent."""
        if math.isinf(inc_obj) or not len(bins):
            return ()
        d = lp.reduced_costs()
        if d is None:
            return ()
        d, xb = d[bins], x[bins]
        free = lb < ub
        at0 = free & (xb <= INT_TOL) & (d > 0)
        at1 = free & (xb >= 1 - INT_TOL) & (d < 0)
        out = [(int(p), 0.0) for p in np.nonzero(at0)[0] if prunable(obj + d[p] - INT_TOL)]
        out += [(int(p), 1.0) for p in np.nonzero(at1)[0] if prunable(obj - d[p] - INT_TOL)]
        return tuple(out)

    def add_cuts(candidate, new):
        for c in new:
            if c.violation(candidate) <= FEAS_TOL:
                raise CutError(f"cut {c.name!r} does not cut off its candidate")
        lp.add_rows(new)
        cuts.extend(new)

    def elapsed():
        return time.perf_counter() - t0

    if warm_start is not None:
        ws = np.array(warm_start, dtype=float)
        hint = ws.copy()
        if len(bins):
            ws[bins] = np.round(ws[bins])
        if np.any(np.isnan(ws)):
            apply([(p, ws[b]) for p, b in enumerate(bins)])
            st, _, xs = lp.solve()
            ws = xs if st == "optimal" else None
            if ws is not None and len(bins):
                ws[bins] = np.round(ws[bins])
        if ws is not None and model.is_feasible(ws):
            new = callback(ws) if callback else []
            if new:
                add_cuts(ws, new)
            else:
                inc_x, inc_obj = ws, model.objective_value(ws)
                if integral:
                    inc_obj = round(inc_obj)

    pos_of = {int(b): p for p, b in enumerate(bins)}
    packing = _packing_rows(model, pos_of) if sos else {}
    counter = itertools.count()
    heap = [(-math.inf, 0, next(counter), ())]
    nodes = 0
    status = "optimal"
    while heap:
        if (node_limit is not None and nodes >= node_limit) or \
                (time_limit is not None and elapsed() > time_limit):
            status = "limit"
            break
        bound, negdepth, _, fix = heapq.heappop(heap)
        if bound > -math.inf and prunable(bound):
            continue
        nodes += 1
        lb, ub = apply(fix)
        while True:
            st, obj, x = lp.solve()
            if st != "optimal" or prunable(obj):
                x = None
                break
            var = _branch_var(x, bins, branching) if len(bins) else None
            if var is not None:
                break
            cand = x.copy()
            if len(bins):
                cand[bins] = np.round(cand[bins])
            new = callback(cand) if callback else []
            if not new:
                inc_x, inc_obj = cand, model.objective_value(cand)
                if integral:
                    inc_obj = round(inc_obj)
                x = None
                break
            add_cuts(cand, new)
        if x is None:
            continue
        fixed = reduced_cost_fixing(obj, x, lb, ub)
        if fixed and not fix:
            # root fixings hold for the whole tree
            for p_, v in fixed:
                base_lb[p_] = base_ub[p_] = v
            fixed = ()
        fix = fix + fixed
        kb = key(obj)
        split = _packing_split(x, bins, packing, pos_of[var]) if packing else None
        if split is not None:
            left, right, m_left, m_right = split
            keep_left = m_left >= m_right
            if hint is not None and not np.isnan(hint[bins[right]]).any() and hint[bins[right]].max() > 0.5:
                keep_left = False
            elif hint is not None and not np.isnan(hint[bins[left]]).any() and hint[bins[left]].max() > 0.5:
                keep_left = True
            zero_right, zero_left = (tuple((int(p), 0.0) for p in half if lb[p] < ub[p]) for half in (right, left))
            children = (zero_right, zero_left) if keep_left else (zero_left, zero_right)
        else:
            first = 1.0 if x[var] >= 0.5 else 0.0
            if hint is not None and not math.isnan(hint[var]):
                first = float(round(hint[var]))
            children = (((pos_of[var], first),), ((pos_of[var], 1.0 - first),))
        for extra, more in enumerate(children):
            # the preferred child is explored first among equal bounds
            heapq.heappush(heap, (kb, negdepth - 1 + extra, next(counter), fix + more))

    open_bound = min((b for b, *_ in heap), default=math.inf)
    sol = Solution(status=status, nodes=nodes, cuts=cuts, seconds=elapsed())
    if status == "limit":
        sol.bound = min(open_bound, inc_obj)
    if inc_x is not None:
        sol.x, sol.objective = inc_x, inc_obj
        if status == "optimal":
            sol.bound = inc_obj
    elif status == "optimal":
        sol.status = "infeasible"
        sol.bound = math.inf
    return sol


def solve_lp_feasibility(rows: Sequence[LinearConstraint], n_vars: Optional[int] = None,
                         lb=0.0, ub=math.inf, backend: str = "highs") -> bool:
    """Feasibility of a purely continuous system (variables default to [0, inf))."""
    if n_vars is None:
        n_vars = 1 + max((i for r in rows for i in r.coeffs), default=-1)
    if not rows:
        return True
    m = Model("feasibility")
    for i in range(n_vars):
        lo = lb[i] if np.ndim(lb) else lb
        hi = ub[i] if np.ndim(ub) else ub
        m.add_var(f"v{i}", CONTINUOUS, lo, hi)
    m.rows = list(rows)
    st, _, _ = BACKENDS[backend](m).solve()
    return st == "optimal"
