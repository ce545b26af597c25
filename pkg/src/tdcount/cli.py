"""Command-line front end.

Standard output carries table dumps (``--emit-tables``), then statistics
(``--stats``), then the result alone on the last line.  Diagnostics go to
standard error.  Exit codes: 0 success, 1 bad input, 2 resource budget
exceeded, 3 external solver failure with falling back disabled.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

from .counting_dp import dump_sat_tables
from .decompose import (
    HEURISTICS,
    DecompositionError,
    decompose,
    heuristic_order,
    make_nice,
    read_td,
    td_from_order,
    validate_td,
    write_td,
)
from .formula import DimacsError, PmcInstance, parse_dimacs
from .graphs import nested_primal_graph, primal_graph
from .hybrid import ExternalSolverError, SolverConfig, internal_fallback_count, solve
from .nested_dp import dump_nested_tables, run_nested_dp, run_nested_proj
from .oracle import OracleBudgetError, brute_pmc
from .projected_dp import DEFAULT_ROW_BUDGET, ResourceLimitError, dump_proj_tables, run_proj

EXIT_OK, EXIT_INPUT, EXIT_RESOURCE, EXIT_EXTERNAL = 0, 1, 2, 3

# JSON Schema of ``--stats json``.  ``count`` repeats the last output line
# (the width for ``td``); ``details`` holds hybrid solver counters.
STATS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["mode", "path", "count", "widths", "nodes", "max_table_rows", "max_depth", "cache_hits", "details"],
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["count", "pmc", "td", "oracle"]},
        "path": {"type": "string"},
        "count": {"type": "string", "pattern": "^[0-9]+$"},
        "widths": {"type": "array", "items": {"type": "integer", "minimum": -1}},
        "nodes": {"type": ["integer", "null"], "minimum": 0},
        "max_table_rows": {"type": ["integer", "null"], "minimum": 0},
        "max_depth": {"type": "integer", "minimum": 0},
        "cache_hits": {"type": "integer", "minimum": 0},
        "details": {"type": "object"},
        "wall_time": {"type": "number", "minimum": 0},
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class RunReport:
    mode: str
    path: str
    count: str | None = None
    widths: list = field(default_factory=list)
    nodes: int | None = None
    max_table_rows: int | None = None
    max_depth: int = 0
    cache_hits: int = 0
    details: dict = field(default_factory=dict)
    wall_time: float | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["wall_time"] is None:
            del d["wall_time"]
        return d

    def as_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, (dict, list)):
                v = json.dumps(v, sort_keys=True)
            lines.append(f"{k}: {v}")
        return "\n".join(lines)


def _var_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of variables: {text!r}") from None
    if any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("variables must be positive")
    return vals


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="DIMACS CNF file ('-' for standard input)")
    common.add_argument("--seed", type=int, default=0, help="tie-breaking seed for decomposition heuristics")
    common.add_argument("--heuristic", choices=HEURISTICS, default="min-fill")
    common.add_argument("--project", type=_var_list, default=None, metavar="VARS",
                        help='projection variables, e.g. "3 4"; overrides show lines')
    common.add_argument("--abstraction", type=_var_list, default=None, metavar="VARS",
                        help="run one level of nested DP over these abstraction variables")
    common.add_argument("--td-in", default=None, metavar="FILE.td",
                        help="PACE tree decomposition to use instead of the heuristic one")
    common.add_argument("--stats", choices=("json", "text"), default=None)
    common.add_argument("--timing", action="store_true", help="include wall time in the statistics")
    common.add_argument("-v", "--verbose", action="store_true")

    solving = argparse.ArgumentParser(add_help=False)
    solving.add_argument("--threshold-abstr", type=_nonneg, default=None)
    solving.add_argument("--threshold-depth", type=_nonneg, default=2)
    solving.add_argument("--threshold-hybrid", type=_nonneg, default=1000)
    solving.add_argument("--max-abstraction", type=_nonneg, default=64)
    solving.add_argument("--row-budget", type=_nonneg, default=DEFAULT_ROW_BUDGET)
    solving.add_argument("--no-cache", action="store_true")
    solving.add_argument("--no-nesting", action="store_true", help="plain two-pass projected DP, no nesting")
    solving.add_argument("--no-fallback", action="store_true",
                         help="fail (exit 3) instead of counting internally when an external solver fails")
    solving.add_argument("--solver-sat", default=None, metavar="CMD")
    solving.add_argument("--solver-sharpsat", default=None, metavar="CMD")
    solving.add_argument("--solver-pmc", default=None, metavar="CMD")
    solving.add_argument("--solver-timeout", type=float, default=None)
    solving.add_argument("--solver-stdin", action="store_true", help="feed solvers through standard input")
    solving.add_argument("--emit-tables", action="store_true", help="dump DP tables before the result")
    solving.add_argument("--jobs", type=int, default=None, help="worker threads for subsolver calls")

    parser = _Parser(prog="tdcount", description="Model counting and projected model counting on tree decompositions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("count", parents=[common, solving], help="count models")
    sub.add_parser("pmc", parents=[common, solving], help="count models projected to the show variables")
    td = sub.add_parser("td", parents=[common], help="decompose and report the width")
    td.add_argument("--td-out", default=None, metavar="FILE.td", help="write the decomposition in PACE format")
    oracle = sub.add_parser("oracle", parents=[common], help="brute-force count (small formulas only)")
    oracle.add_argument("--count", action="store_true", help="ignore the projection and count models")
    return parser


def _read_instance(args) -> PmcInstance:
    if args.file == "-":
        data = sys.stdin.read()
    else:
        with open(args.file, "rb") as fh:
            data = fh.read()
    return parse_dimacs(data, args.project)


def _load_td(path: str, graph, what: str):
    with open(path) as fh:
        td = read_td(fh.read())
    problems = validate_td(td, graph, nice=False)
    if problems:
        raise DecompositionError(f"--td-in is not a decomposition of the {what}: " + "; ".join(problems[:5]))
    return td


def _run_plain(inst: PmcInstance, projection, args, report: RunReport, out: list[str]) -> int:
    graph = primal_graph(inst.formula)
    td = _load_td(args.td_in, graph, "primal graph") if args.td_in else decompose(graph, args.heuristic, args.seed)
    res = run_proj(inst.formula, projection, td, args.row_budget)
    if args.emit_tables:
        out.append(dump_sat_tables(res.raw).rstrip("\n"))
        out.append(dump_proj_tables(res).rstrip("\n"))
    report.widths = [res.sat.td.width]
    report.nodes = len(res.sat.td)
    report.max_table_rows = res.max_rows
    return res.count


def _run_nested(inst: PmcInstance, projection, counting: bool, args, report: RunReport, out: list[str]) -> int:
    a = frozenset(args.abstraction)
    graph = nested_primal_graph(inst.formula, a)
    td = _load_td(args.td_in, graph, "nested primal graph") if args.td_in else decompose(graph, args.heuristic, args.seed)
    proj = None if counting else frozenset(projection)
    if proj is not None and not a <= proj:
        res = run_nested_proj(inst.formula, proj, a, td, internal_fallback_count, row_budget=args.row_budget)
        if args.emit_tables:
            out.append(dump_sat_tables(res.sat).rstrip("\n"))
            out.append(dump_proj_tables(res).rstrip("\n"))
        report.max_table_rows = max(p.num_rows() for p in res.proj)
    else:
        res = run_nested_dp(0, inst.formula, proj, a, td, internal_fallback_count)
        if args.emit_tables:
            out.append(dump_nested_tables(res).rstrip("\n"))
        report.max_table_rows = max(len(t.rows) for t in res.tables)
    report.widths = [res.context.td.width]
    report.nodes = len(res.context.td)
    free = inst.formula.free_vars if counting else frozenset(projection) - inst.formula.vars
    return res.count << len(free)


def _run_hybrid(inst: PmcInstance, projection, counting: bool, args, report: RunReport, out: list[str]) -> int:
    config = SolverConfig(
        threshold_hybrid=args.threshold_hybrid,
        threshold_depth=args.threshold_depth,
        threshold_abstr=args.threshold_abstr,
        max_abstraction_size=args.max_abstraction,
        heuristic=args.heuristic,
        seed=args.seed,
        row_budget=args.row_budget,
        sat_cmd=args.solver_sat,
        sharpsat_cmd=args.solver_sharpsat,
        pmc_cmd=args.solver_pmc,
        solver_timeout=args.solver_timeout,
        solver_stdin=args.solver_stdin,
        use_cache=not args.no_cache,
        allow_fallback=not args.no_fallback,
        jobs=args.jobs if args.jobs is not None else (os.cpu_count() or 1),
        emit_tables=args.emit_tables,
    )
    value, stats = solve(inst.formula, projection, config, counting=counting)
    if args.emit_tables and stats.tables_dump:
        out.append(stats.tables_dump.rstrip("\n"))
    report.widths = [w for _, w in sorted(stats.widths)]
    report.max_depth = stats.max_depth
    report.cache_hits = stats.cache_hits
    report.details = stats.as_dict()
    return value


def _dispatch(args, report: RunReport, out: list[str]) -> int:
    inst = _read_instance(args)
    counting = args.command == "count" or (args.command == "oracle" and args.count)
    projection = range(1, inst.formula.num_vars + 1) if counting else inst.projection
    if args.command == "oracle":
        return brute_pmc(inst.formula, projection)
    if args.command == "td":
        if args.abstraction is not None:
            graph = nested_primal_graph(inst.formula, args.abstraction)
        else:
            graph = primal_graph(inst.formula)
        if args.td_in:
            raw = _load_td(args.td_in, graph, "graph")
        else:
            raw = td_from_order(graph, heuristic_order(graph, args.heuristic, args.seed))
        if args.td_out:
            with open(args.td_out, "w") as fh:
                fh.write(write_td(raw, max(graph.vertices, default=0)))
        report.widths = [raw.width]
        report.nodes = len(make_nice(raw))
        return raw.width
    if args.no_nesting and args.abstraction is not None:
        raise ValueError("--no-nesting and --abstraction are mutually exclusive")
    if args.no_nesting:
        return _run_plain(inst, projection, args, report, out)
    if args.abstraction is not None:
        return _run_nested(inst, projection, counting, args, report, out)
    if args.td_in:
        raise ValueError("--td-in needs --no-nesting or --abstraction")
    return _run_hybrid(inst, projection, counting, args, report, out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    report = RunReport(mode=args.command, path=args.file)
    out: list[str] = []
    start = time.perf_counter()
    try:
        result = _dispatch(args, report, out)
    except (ResourceLimitError, OracleBudgetError) as exc:
        print(f"tdcount: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (DimacsError, DecompositionError, ValueError, OSError) as exc:
        print(f"tdcount: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ExternalSolverError as exc:
        print(f"tdcount: external solver: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    report.count = str(result)
    if args.timing:
        report.wall_time = round(time.perf_counter() - start, 6)
    if args.stats == "json":
        out.append(json.dumps(report.as_dict(), sort_keys=True))
    elif args.stats == "text":
        out.append(report.as_text())
    out.append(str(result))
    sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
