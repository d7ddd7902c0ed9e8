"""Command-line front end.

Exit codes: 0 success, 1 bad input, 2 internal error, 3 budget exhausted
(the partial frontier is still written and flagged). Data goes to files; stdout
carries one summary line per command.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from .biobjective import (Frontier, cut_log_csv, brute_force_frontier, epsilon_constraint,
                          frontier_from_csv, frontier_to_csv, weighting_binary_search)
from .instance import GeneratorParams, InstanceError, generate_instance, load_instance, save_instance
from .models import VI_LEVELS, add_valid_inequalities, assemble
from .multigraph import build_graph
from .oracle import OracleLimitError

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL, EXIT_BUDGET = 0, 1, 2, 3
VARIANTS = ("m1", "m2", "m3", "m4", "m4b")
METHODS = ("eps-cost", "eps-pref", "wbs")
_UNITS = {"": 1, "s": 1, "m": 60, "h": 3600}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def parse_budget(text: str) -> float:
    """'90', '90s', '2m' or '1h' -> seconds."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([smh]?)\s*", text or "")
    if not m:
        raise argparse.ArgumentTypeError(f"invalid budget {text!r}")
    return float(m.group(1)) * _UNITS[m.group(2)]


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _load(path: str):
    return load_instance(Path(path).read_text(encoding="utf-8"))


def graph_variant(variant: str) -> str:
    return "M4" if variant == "m4b" else variant.upper()


# --------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    index = args.seed if args.index is None else args.index
    name = f"E_{args.users}_{index}"
    params = GeneratorParams(args.users, tuple(args.trips), tuple(args.tasks), n_depots=args.depots,
                             cars_per_depot=args.cars, horizon=args.horizon, max_wait=args.max_wait,
                             alpha=args.alpha, name=name)
    inst = generate_instance(params, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(save_instance(inst), encoding="utf-8")
    n_tasks = sum(len(r.tasks) for r in inst.trips)
    print(f"{name}: users={len(inst.users)} trips={len(inst.trips)} tasks={n_tasks} depots={len(inst.depots)}")
    return EXIT_OK


def run_frontier(inst, variant: str, method: str, vi: str = "none", propagate: bool = True,
                 budget=None, node_limit=None, reduce: bool = True) -> Frontier:
    graph = build_graph(inst, graph_variant(variant), reduce=reduce)
    problem = assemble(graph, variant)
    if variant not in ("m1", "m2"):
        problem = add_valid_inequalities(problem, vi)
    if method == "wbs":
        return weighting_binary_search(problem, propagate, budget, node_limit)
    direction = "cost_first" if method == "eps-cost" else "pref_first"
    return epsilon_constraint(problem, direction, propagate, budget, node_limit)


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    f = run_frontier(inst, args.variant, args.method, args.vi, args.propagate, args.budget,
                     args.node_limit, not args.no_reduce)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{inst.name}_{args.variant}_{args.method}"
    (out / f"{stem}.csv").write_text(frontier_to_csv(f))
    if args.variant == "m4b":
        (out / f"{stem}_cuts.csv").write_text(cut_log_csv(f))
    if args.dump_legs:
        graph = build_graph(inst, graph_variant(args.variant), reduce=not args.no_reduce)
        (out / f"{stem}_legs.csv").write_text(graph.to_csv())
    cuts = " ".join(map(str, f.cuts_per_solve))
    print(f"{stem}: frontier={len(f)} seconds={f.seconds:.2f} truncated={str(f.truncated).lower()} "
          f"cuts=[{cuts}]")
    return EXIT_BUDGET if f.truncated else EXIT_OK


def _weakly_dominates(a: Frontier, b: Frontier) -> bool:
    """Every point of b is matched or beaten in both objectives by a point of a."""
    return all(any(p.cost <= q.cost and p.preference <= q.preference for p in a.points) for q in b.points)


def compare_frontiers(a: Frontier, b: Frontier, la: str, lb: str) -> str:
    if set(a.pairs) == set(b.pairs):
        return "equal"
    ab, ba = _weakly_dominates(a, b), _weakly_dominates(b, a)
    if ab:
        return f"{la} weakly dominates {lb}"
    if ba:
        return f"{lb} weakly dominates {la}"
    return "incomparable"


def _ranges(f: Frontier) -> str:
    if not f.points:
        return "empty"
    cs = [p.cost for p in f.points]
    ps = [p.preference for p in f.points]
    return f"cost {min(cs)}..{max(cs)} preference {min(ps)}..{max(ps)}"


def cmd_compare(args) -> int:
    labels = args.labels or [Path(p).stem for p in args.csv]
    if len(labels) != len(args.csv):
        raise InputError("--labels needs one label per CSV")
    fronts = []
    for path in args.csv:
        try:
            fronts.append(frontier_from_csv(Path(path).read_text(), path))
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
    for i in range(len(fronts)):
        for j in range(i + 1, len(fronts)):
            a, b = fronts[i], fronts[j]
            verdict = compare_frontiers(a, b, labels[i], labels[j])
            print(f"{labels[i]} vs {labels[j]}: {verdict}; sizes {len(a)} vs {len(b)}; "
                  f"{_ranges(a)} vs {_ranges(b)}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = _load(args.instance)
    f = brute_force_frontier(inst, graph_variant(args.variant))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{inst.name}_{args.variant}_oracle"
    (out / f"{stem}.csv").write_text(frontier_to_csv(f))
    print(f"{stem}: frontier={len(f)} seconds={f.seconds:.2f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmcarshare", description="Bi-objective multimodal car-sharing frontiers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random instance E_<users>_<index>")
    g.add_argument("--users", type=_positive, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--index", type=int, help="instance index in the name (default: seed)")
    g.add_argument("--trips", type=_positive, nargs=2, default=(1, 2), metavar=("LO", "HI"))
    g.add_argument("--tasks", type=_positive, nargs=2, default=(1, 3), metavar=("LO", "HI"))
    g.add_argument("--depots", type=_positive, default=1)
    g.add_argument("--cars", type=int, default=1, help="cars per depot")
    g.add_argument("--horizon", type=_positive, default=720)
    g.add_argument("--max-wait", type=int, default=30)
    g.add_argument("--alpha", type=_positive, default=15)
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="enumerate the Pareto frontier of one instance")
    s.add_argument("instance")
    s.add_argument("--variant", choices=VARIANTS, default="m4b")
    s.add_argument("--method", choices=METHODS, default="eps-cost")
    s.add_argument("--vi", choices=VI_LEVELS, default="m4_set")
    s.add_argument("--propagate", dest="propagate", action="store_true", default=True)
    s.add_argument("--no-propagate", dest="propagate", action="store_false")
    s.add_argument("--budget", type=parse_budget, help="wall-clock budget, e.g. 30s, 5m")
    s.add_argument("--node-limit", type=_positive, help="branch-and-bound nodes per solve")
    s.add_argument("--no-reduce", action="store_true", help="keep every leg duplicate")
    s.add_argument("--dump-legs", action="store_true", help="also write the leg CSV")
    s.add_argument("--seed", type=int, default=0, help="accepted for reproducible run records; solves are deterministic")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="compare frontier CSVs pairwise")
    c.add_argument("csv", nargs="+")
    c.add_argument("--labels", nargs="+")
    c.set_defaults(func=cmd_compare)

    o = sub.add_parser("oracle", help="brute-force frontier of a small instance")
    o.add_argument("instance")
    o.add_argument("--variant", choices=VARIANTS, default="m4b")
    o.add_argument("--out", default=".")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "compare" and len(args.csv) < 2:
        print("mmcarshare compare: error: at least two CSV files are needed", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InstanceError, InputError, OracleLimitError, OSError, UnicodeDecodeError) as exc:
        print(f"mmcarshare {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - reported as an internal failure
        print(f"mmcarshare {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
