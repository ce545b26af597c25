"""Hybrid solving: nested DP that hands subproblems to standard solvers.

The driver preprocesses, consults a cache, and then either calls a standard
solver (too deep or too wide) or runs nested DP over the projection
variables, recursing one level deeper for every nested bag formula.
"""

from __future__ import annotations

import logging
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

from .decompose import decompose
from .formula import CnfFormula, canonical_key, unit_propagate, write_dimacs
from .graphs import nested_primal_graph, primal_graph
from .nested_dp import dump_nested_tables, run_nested_dp
from .projected_dp import DEFAULT_ROW_BUDGET

log = logging.getLogger(__name__)

SOLVER_DIR_ENV = "TDCOUNT_SOLVER_DIR"
SOLVER_KINDS = ("sat", "sharpsat", "pmc")


class ExternalSolverError(RuntimeError):
    """An external solver failed and falling back was disabled."""


@dataclass
class SolverConfig:
    threshold_hybrid: int = 1000
    threshold_depth: int = 2
    threshold_abstr: int | None = None  # None: 8 for projected counting, 38 for model counting
    max_abstraction_size: int = 64
    heuristic: str = "min-fill"
    seed: int = 0
    row_budget: int = DEFAULT_ROW_BUDGET
    sat_cmd: str | None = None
    sharpsat_cmd: str | None = None
    pmc_cmd: str | None = None
    solver_timeout: float | None = None
    solver_stdin: bool = False
    use_cache: bool = True
    cache_size: int = 100_000
    inline_eval_vars: int = 40  # nested formulas this small are counted in-process
    allow_fallback: bool = True
    jobs: int = 1
    emit_tables: bool = False

    def __post_init__(self):
        for name in ("threshold_hybrid", "threshold_depth", "max_abstraction_size", "inline_eval_vars"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.threshold_abstr is not None and self.threshold_abstr < 0:
            raise ValueError("threshold_abstr must be non-negative")

    def abstr_threshold(self, counting: bool) -> int:
        if self.threshold_abstr is not None:
            return self.threshold_abstr
        return 38 if counting else 8

    def command(self, kind: str) -> str | None:
        return {"sat": self.sat_cmd, "sharpsat": self.sharpsat_cmd, "pmc": self.pmc_cmd}[kind]


class Cache:
    """Thread-safe LRU map from canonical formula keys to counts."""

    def __init__(self, max_entries: int = 100_000):
        self.max_entries = max_entries
        self._data: OrderedDict[bytes, int] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: bytes) -> int | None:
        with self._lock:
            val = self._data.get(key)
            if val is not None:
                self._data.move_to_end(key)
            return val

    def put(self, key: bytes, value: int) -> None:
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.max_entries:
                self._data.popitem(last=False)

    def __len__(self) -> int:
        return len(self._data)


@dataclass
class HybridStats:
    calls: int = 0
    max_depth: int = 0
    cache_hits: int = 0
    nested_runs: int = 0
    inline_evals: int = 0
    standard_calls: dict = field(default_factory=lambda: {k: 0 for k in SOLVER_KINDS})
    external_failures: int = 0
    widths: list = field(default_factory=list)  # (depth, width) per decomposition used
    abstractions: int = 0
    tables_dump: str | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self, name: str, by: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + by)

    def as_dict(self) -> dict:
        return {
            "calls": self.calls,
            "max_depth": self.max_depth,
            "cache_hits": self.cache_hits,
            "nested_runs": self.nested_runs,
            "inline_evals": self.inline_evals,
            "standard_calls": dict(self.standard_calls),
            "external_failures": self.external_failures,
            "abstractions": self.abstractions,
            "widths": sorted(list(w) for w in self.widths),
        }


@dataclass(frozen=True)
class Preprocessed:
    formula: CnfFormula
    projection: frozenset
    multiplier: int
    unsat: bool


def preprocess(formula: CnfFormula, projection: Iterable[int]) -> Preprocessed:
    """Unit propagation plus removal of unconstrained projection variables.

    Projection variables that end up in no clause double the count unless
    propagation forced them.
    """
    proj = frozenset(projection)
    prop = unit_propagate(formula)
    if prop.unsat:
        return Preprocessed(prop.formula, frozenset(), 0, True)
    reduced = prop.formula
    free = proj - reduced.vars - prop.forced.keys()
    return Preprocessed(reduced, proj & reduced.vars, 1 << len(free), False)


def _nested_edge_count(adj: dict, chosen: frozenset) -> int:
    """Edges of the nested primal graph over ``chosen`` without building it."""
    edges = set()
    seen: set = set()
    for u in chosen:
        for w in adj[u]:
            if w in chosen and u < w:
                edges.add((u, w))
    for start in adj:
        if start in chosen or start in seen:
            continue
        seen.add(start)
        stack, nbrs = [start], set()
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y in chosen:
                    nbrs.add(y)
                elif y not in seen:
                    seen.add(y)
                    stack.append(y)
        nb = sorted(nbrs)
        for i, u in enumerate(nb):
            for w in nb[i + 1:]:
                edges.add((u, w))
    return len(edges)


CANDIDATE_POOL = 256


def choose_abstraction_vars(abstraction: Iterable[int], formula: CnfFormula, config: SolverConfig,
                            width_limit: int | None = None) -> frozenset:
    """Greedy subset of at most ``max_abstraction_size`` abstraction variables.

    Starts from the lowest primal degree and keeps adding the variable that
    leaves the nested primal graph with the fewest edges; ties go to the
    smaller id.  With ``width_limit`` it also stops before an addition that
    would give the nested primal graph a heuristic width of ``width_limit``
    or more.  Only the ``CANDIDATE_POOL`` lowest-degree variables compete.
    """
    a = sorted(abstraction)
    if not a:
        return frozenset()
    cap = max(1, config.max_abstraction_size)
    g = primal_graph(formula)
    adj = {v: g.adj[v] for v in g.vertices}
    pool = sorted(a, key=lambda v: (g.degree(v), v))[:CANDIDATE_POOL]
    first = pool[0]
    chosen = {first}
    rest = sorted(pool[1:])
    while len(chosen) < cap and rest:
        best = min(rest, key=lambda v: (_nested_edge_count(adj, frozenset(chosen | {v})), v))
        if width_limit is not None:
            trial = decompose(nested_primal_graph(formula, chosen | {best}), config.heuristic, config.seed)
            if trial.width >= width_limit:
                break
        chosen.add(best)
        rest.remove(best)
    return frozenset(chosen)


_COUNT_PATTERNS = [
    re.compile(r"^s\s+mc\s+(\d+)\s*$", re.M),
    re.compile(r"^s\s+pmc\s+(\d+)\s*$", re.M),
    re.compile(r"^c\s+s\s+exact\s+\S+\s+int\s+(\d+)\s*$", re.M),
    re.compile(r"^#\s*solutions\s*\n\s*(\d+)\s*$", re.M),
]


def parse_solver_output(kind: str, text: str) -> int | None:
    """Count (or 0/1 for ``sat``) from solver output, None if unrecognized."""
    if re.search(r"^s\s+UNSATISFIABLE\s*$", text, re.M):
        return 0
    if kind == "sat":
        return 1 if re.search(r"^s\s+SATISFIABLE\s*$", text, re.M) else None
    for pat in _COUNT_PATTERNS:
        m = pat.search(text)
        if m:
            return int(m.group(1))
    return None


def _resolve(cmd: str) -> list[str]:
    args = shlex.split(cmd)
    if args and os.path.sep not in args[0] and shutil.which(args[0]) is None:
        base = os.environ.get(SOLVER_DIR_ENV)
        if base:
            cand = os.path.join(base, args[0])
            if os.path.exists(cand):
                args[0] = cand
    return args


def external_solver_call(kind: str, formula: CnfFormula, projection: Iterable[int] | None, cmd: str | None,
                         timeout: float | None = None, use_stdin: bool = False) -> int | None:
    """Run an external solver; returns its answer, or None on any failure.

    The formula goes to the solver as DIMACS (with show lines for ``pmc``),
    either as a temp-file argument or on standard input.
    """
    if kind not in SOLVER_KINDS:
        raise ValueError(f"unknown solver kind {kind!r}")
    if not cmd:
        return None
    text = write_dimacs(formula, projection if kind == "pmc" else None)
    args = _resolve(cmd)
    path = None
    try:
        if use_stdin:
            proc = subprocess.run(args, input=text, capture_output=True, text=True, timeout=timeout)
        else:
            with tempfile.NamedTemporaryFile("w", suffix=".cnf", delete=False) as fh:
                fh.write(text)
                path = fh.name
            proc = subprocess.run(args + [path], capture_output=True, text=True, timeout=timeout)
    except (OSError, subprocess.SubprocessError) as exc:
        log.warning("%s solver failed: %s", kind, exc)
        return None
    finally:
        if path:
            os.unlink(path)
    # SAT-competition solvers signal their verdict with 10/20
    if proc.returncode not in (0, 10, 20):
        log.warning("%s solver exited with %d", kind, proc.returncode)
        return None
    value = parse_solver_output(kind, proc.stdout)
    if value is None:
        log.warning("%s solver output not understood", kind)
    return value


def _propagate(clauses: list, assign: dict) -> list | None:
    """Unit propagation on a clause list; extends ``assign``; None on conflict."""
    while True:
        unit = None
        out = []
        for c in clauses:
            reduced = []
            sat = False
            for lit in c:
                val = assign.get(abs(lit))
                if val is None:
                    reduced.append(lit)
                elif val == (lit > 0):
                    sat = True
                    break
            if sat:
                continue
            if not reduced:
                return None
            if len(reduced) == 1 and unit is None:
                unit = reduced[0]
            out.append(reduced)
        if unit is None:
            return out
        assign[abs(unit)] = unit > 0
        clauses = out


def _vars_of(clauses) -> set:
    return {abs(l) for c in clauses for l in c}


def _components(clauses: list) -> list[list]:
    parent: dict[int, int] = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in clauses:
        root = find(abs(c[0]))
        for lit in c[1:]:
            parent[find(abs(lit))] = root
    groups: dict[int, list] = {}
    for c in clauses:
        groups.setdefault(find(abs(c[0])), []).append(c)
    return list(groups.values())


def _search(clauses: list, proj: frozenset, memo: dict) -> int:
    """Projected count over ``proj`` restricted to the clause variables."""
    before = _vars_of(clauses) & proj
    assign: dict = {}
    clauses = _propagate(clauses, assign)
    if clauses is None:
        return 0
    result = 1 << len(before - _vars_of(clauses) - assign.keys())
    for comp in _components(clauses):
        cvars = _vars_of(comp)
        cp = proj & cvars
        key = (frozenset(frozenset(c) for c in comp), frozenset(cp))
        if key in memo:
            r = memo[key]
        else:
            occ: dict[int, int] = {}
            for c in comp:
                for lit in c:
                    if abs(lit) in cp or not cp:
                        occ[abs(lit)] = occ.get(abs(lit), 0) + 1
            x = max(sorted(occ), key=lambda v: occ[v])
            r = 0
            for lit in (x, -x):
                assign = {x: lit > 0}
                sub = _propagate(comp, assign)
                if sub is None:
                    continue
                vanished = cp - assign.keys() - _vars_of(sub)
                r += _search(sub, cp, memo) << len(vanished)
                if not cp and r:
                    break
            if not cp:
                r = min(r, 1)
            memo[key] = r
        result *= r
        if not result:
            return 0
    return result


def internal_fallback_count(formula: CnfFormula, projection: Iterable[int]) -> int:
    """Exact projected count by branching on projection variables.

    Unit propagation and splitting into independent components keep it
    practical on small formulas; components without projection variables
    only need a satisfiability check.
    """
    proj = frozenset(projection)
    if formula.has_empty_clause():
        return 0
    clauses = [sorted(c) for c in formula.sorted_clauses()]
    core = _search(clauses, proj & formula.vars, {}) if clauses else 1
    return core << len(proj - formula.vars)


def _standard(kind: str, formula: CnfFormula, projection: frozenset, config: SolverConfig,
              stats: HybridStats) -> int:
    with stats._lock:
        stats.standard_calls[kind] += 1
    cmd = config.command(kind)
    if cmd:
        value = external_solver_call(kind, formula, projection, cmd, config.solver_timeout, config.solver_stdin)
        if value is not None:
            return value
        stats.bump("external_failures")
        if not config.allow_fallback:
            raise ExternalSolverError(f"{kind} solver failed and fallback is disabled")
    elif not config.allow_fallback:
        raise ExternalSolverError(f"no {kind} solver configured and fallback is disabled")
    value = internal_fallback_count(formula, projection if kind != "sat" else ())
    return min(value, 1) if kind == "sat" else value


def hyb_dp(depth: int, formula: CnfFormula, projection: Iterable[int], config: SolverConfig,
           cache: Cache | None = None, stats: HybridStats | None = None, counting: bool = False,
           executor=None) -> int:
    """Projected model count of ``(formula, projection)`` by hybrid solving.

    ``counting`` only selects the default abstraction threshold.
    """
    stats = stats if stats is not None else HybridStats()
    assert depth <= config.threshold_depth, "nesting deeper than the depth threshold"
    with stats._lock:
        stats.calls += 1
        stats.max_depth = max(stats.max_depth, depth)

    pre = preprocess(formula, projection)
    if pre.unsat:
        return 0
    f1, p1, mult = pre.formula, pre.projection, pre.multiplier
    if not f1.clauses:
        return mult
    key =canonical_key(f1, p1) if cache is not None else None
    if key is not None:
        hit = cache.get(key)
        if hit is not None:
            stats.bump("cache_hits")
            return hit * mult
    if not p1:
        return _standard("sat", f1, p1, config, stats) * mult

    abstraction = p1
    td = decompose(nested_primal_graph(f1, abstraction), config.heuristic, config.seed)
    if td.width >= config.threshold_hybrid or depth >= config.threshold_depth:
        kind = "sharpsat" if f1.vars == p1 else "pmc"
        value = _standard(kind, f1, p1, config, stats)
    else:
        if td.width >= config.abstr_threshold(counting):
            abstraction = choose_abstraction_vars(abstraction, f1, config, config.abstr_threshold(counting))
            if abstraction != p1:
                stats.bump("abstractions")
                td = decompose(nested_primal_graph(f1, abstraction), config.heuristic, config.seed)
        with stats._lock:
            stats.widths.append((depth, td.width))
        stats.bump("nested_runs")

        def subsolve(sub: CnfFormula, sub_proj: frozenset) -> int:
            if len(sub.vars) <= config.inline_eval_vars:
                stats.bump("inline_evals")
                return internal_fallback_count(sub, sub_proj)
            return hyb_dp(depth + 1, sub, sub_proj, config, cache, stats, counting)

        res = run_nested_dp(depth, f1, p1, abstraction, td, subsolve, executor=executor,
                            retain=config.emit_tables and depth == 0)
        if config.emit_tables and depth == 0:
            stats.tables_dump = dump_nested_tables(res)
        value = res.count
    if key is not None:
        cache.put(key, value)
    return value * mult


def solve(formula: CnfFormula, projection: Iterable[int] | None = None, config: SolverConfig | None = None,
          counting: bool = False) -> tuple[int, HybridStats]:
    """Top-level entry: hybrid count plus the statistics of the run.

    ``projection=None`` (or ``counting=True``) counts models over all
    declared variables.
    """
    config = config or SolverConfig()
    if projection is None or counting:
        projection = range(1, formula.num_vars + 1)
        counting = True
    cache = Cache(config.cache_size) if config.use_cache else None
    stats = HybridStats()
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            value = hyb_dp(0, formula, projection, config, cache, stats, counting, executor=pool)
    else:
        value = hyb_dp(0, formula, projection, config, cache, stats, counting)
    return value, stats


__all__ = [
    "Cache",
    "ExternalSolverError",
    "HybridStats",
    "Preprocessed",
    "SolverConfig",
    "choose_abstraction_vars",
    "external_solver_call",
    "hyb_dp",
    "internal_fallback_count",
    "parse_solver_output",
    "preprocess",
    "solve",
]
