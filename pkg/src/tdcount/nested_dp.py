"""Dynamic programming on a decomposition of the nested primal graph.

Only the abstraction variables ``A`` appear in bags.  Every component of
``primal(F) - A`` is attached to one introduce node whose bag holds all of its
``A``-neighbours; there, each row's assignment is plugged into the component's
clauses and the residual formula is counted by a ``subsolve`` callback.
"""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .counting_dp import TableMap, compile_clause, format_set, purge, sat_table_step
from .decompose import INTRODUCE, JOIN, LEAF, REMOVE, TreeDecomposition, decompose, make_nice
from .formula import CnfFormula, PmcInstance, apply_assignment
from .graphs import nested_primal_graph, nesting_components
from .projected_dp import DEFAULT_ROW_BUDGET, proj_table_step

Subsolve = Callable[[CnfFormula, frozenset], int]


@dataclass
class AbstractionContext:
    abstraction_vars: frozenset
    nested_graph: object  # Graph on the abstraction variables
    td: TreeDecomposition
    compat: dict  # component (frozenset) -> node id
    nested_bag_vars: list  # node id -> frozenset
    nested_bag_formulas: list  # node id -> CnfFormula
    abstract_clauses: list  # clauses over A only, sorted


def compute_abstraction_context(formula: CnfFormula, abstraction: Iterable[int],
                                td: TreeDecomposition | None = None, tie_break: str = "first",
                                heuristic: str = "min-fill", seed: int = 0) -> AbstractionContext:
    """Assign each nesting component to a compatible node and build nested bag formulas.

    ``tie_break`` picks the first (or, with ``"last"``, the last) compatible
    introduce node in post-order.
    """
    a = frozenset(abstraction)
    graph = nested_primal_graph(formula, a)
    if td is None:
        td = decompose(graph, heuristic, seed)
    elif not td.nice:
        td = make_nice(td)
    stray = td.vertices - a
    if stray:
        raise ValueError(f"decomposition bags hold non-abstraction variables {sorted(stray)}")
    order = td.postorder()
    ints = [t for t in order if td.types[t] == INTRODUCE]
    if tie_break == "last":
        ints.reverse()
    elif tie_break != "first":
        raise ValueError(f"unknown tie break {tie_break!r}")
    compat = {}
    nested_vars: list[set] = [set() for _ in range(len(td))]
    for comp, nbrs in nesting_components(formula, a):
        if not ints:
            node = td.root
        else:
            node = next((t for t in ints if nbrs <= td.bags[t]), None)
            assert node is not None, f"no compatible node for component {sorted(comp)}"
        compat[comp] = node
        nested_vars[node] |= comp
    owner = {v: compat[c] for c in compat for v in c}
    per_node: list[set] = [set() for _ in range(len(td))]
    abstract = []
    for c in formula.clauses:
        outside = next((abs(l) for l in c if abs(l) not in a), None)
        if outside is None:
            abstract.append(c)
        else:
            per_node[owner[outside]].add(c)
    return AbstractionContext(
        abstraction_vars=a,
        nested_graph=graph,
        td=td,
        compat=compat,
        nested_bag_vars=[frozenset(s) for s in nested_vars],
        nested_bag_formulas=[CnfFormula(frozenset(s), formula.num_vars) for s in per_node],
        abstract_clauses=sorted(tuple(sorted(c)) for c in abstract),
    )


@dataclass
class NestedTable:
    node: int
    kind: str
    bag: tuple
    rows: dict  # mask -> count, every count positive

    def sorted_rows(self) -> list[tuple[int, int]]:
        return sorted(self.rows.items())

    def true_vars(self, mask: int) -> tuple:
        return tuple(v for i, v in enumerate(self.bag) if mask >> i & 1)


def nested_table_step(depth: int, node: int, kind: str, bag: Iterable[int], clauses: Iterable[Iterable[int]],
                      nested_formula: CnfFormula | None, nested_projection: frozenset,
                      child_tables: Sequence[NestedTable], subsolve: Subsolve,
                      executor: Executor | None = None) -> NestedTable:
    """One nested table.

    ``clauses`` are the abstraction-only clauses to check at this node.  When
    ``nested_formula`` is given, every row's count is multiplied by
    ``subsolve(nested_formula[row], nested_projection)`` and rows whose
    factor is zero are dropped.  ``depth`` is passed through for the caller's
    bookkeeping only.
    """
    bag = tuple(sorted(bag))
    rows: dict[int, int] = {}
    if kind == LEAF:
        if not any(not tuple(c) for c in clauses):
            rows[0] = 1
    elif kind == INTRODUCE:
        child = child_tables[0]
        (v,) = set(bag) - set(child.bag)
        r = bag.index(v)
        checks = [compile_clause(c, bag) for c in clauses]
        low = (1 << r) - 1
        for mask, count in child.rows.items():
            base = (mask & low) | ((mask >> r) << (r + 1))
            for m in (base, base | 1 << r):
                if all((m & pm) or (nm & ~m) for pm, nm in checks):
                    rows[m] = count
    elif kind == REMOVE:
        child = child_tables[0]
        (v,) = set(child.bag) - set(bag)
        r = child.bag.index(v)
        low = (1 << r) - 1
        for mask, count in child.rows.items():
            m = (mask & low) | ((mask >> (r + 1)) << r)
            rows[m] = rows.get(m, 0) + count
    elif kind == JOIN:
        left, right = child_tables
        for mask, count in left.rows.items():
            other = right.rows.get(mask)
            if other is not None:
                rows[mask] = count * other
    else:
        raise ValueError(f"node {node}: unknown node type {kind!r}")

    if nested_formula is not None and rows:
        masks = sorted(rows)
        subs = [apply_assignment(nested_formula, {v: mask >> i & 1 for i, v in enumerate(bag)}) for mask in masks]
        if executor is not None:
            factors = list(executor.map(lambda f: subsolve(f, nested_projection), subs))
        else:
            factors = [subsolve(f, nested_projection) for f in subs]
        for mask, factor in zip(masks, factors):
            if factor > 0:
                rows[mask] *= factor
            else:
                del rows[mask]
    assert len(rows) <= 1 << len(bag), "nested table exceeds 2^|bag| rows"
    return NestedTable(node, kind, bag, rows)


@dataclass
class NestedResult:
    count: int  # sum of root counts, before any free-variable factor
    context: AbstractionContext
    tables: list


def run_nested_dp(depth: int, formula: CnfFormula, projection: Iterable[int] | None, abstraction: Iterable[int],
                  td: TreeDecomposition | None, subsolve: Subsolve, tie_break: str = "first",
                  executor: Executor | None = None, heuristic: str = "min-fill", seed: int = 0,
                  retain: bool = True) -> NestedResult:
    """Nested DP in post-order.

    ``projection=None`` counts models: every nesting variable is projected.
    Otherwise the abstraction must lie inside the projection.
    """
    a = frozenset(abstraction)
    proj = None if projection is None else frozenset(projection)
    if proj is not None and not a <= proj:
        raise ValueError(f"abstraction variables outside the projection: {sorted(a - proj)}")
    ctx = compute_abstraction_context(formula, a, td, tie_break, heuristic, seed)
    td = ctx.td
    occ = _abstract_clause_index(ctx)
    checked: set[int] = set()
    tables: list = [None] * len(td)
    for t in td.postorder():
        kind = td.types[t]
        clauses: list = []
        if kind == LEAF and formula.has_empty_clause():
            clauses = [()]
        elif kind == INTRODUCE:
            ks = [k for k, vs in occ.get(td.changed_var(t), ()) if vs <= td.bags[t]]
            checked.update(ks)
            clauses = [ctx.abstract_clauses[k] for k in ks]
        nested_vars = ctx.nested_bag_vars[t]
        nested_formula = ctx.nested_bag_formulas[t] if nested_vars else None
        nproj = nested_vars if proj is None else nested_vars & proj
        tables[t] = nested_table_step(depth, t, kind, td.bags[t], clauses, nested_formula, nproj,
                                      [tables[c] for c in td.children[t]], subsolve, executor)
        if not retain:
            for c in td.children[t]:
                tables[c] = None
    missing = [c for k, c in enumerate(ctx.abstract_clauses) if c and k not in checked]
    if missing:
        raise ValueError(f"decomposition does not cover clause {list(missing[0])}")
    return NestedResult(sum(tables[td.root].rows.values()), ctx, tables)


def _abstract_clause_index(ctx: AbstractionContext) -> dict:
    occ: dict[int, list] = {}
    for k, c in enumerate(ctx.abstract_clauses):
        vs = frozenset(abs(l) for l in c)
        for v in vs:
            occ.setdefault(v, []).append((k, vs))
    return occ


def conjoin_copies(formula: CnfFormula, assignments: Sequence[dict], keep: frozenset) -> CnfFormula:
    """Conjunction of ``formula[a]`` over ``assignments``, each copy with its own non-``keep`` variables.

    Its projected count over ``keep`` is the size of the intersection of the
    copies' projected model sets.
    """
    n = formula.num_vars
    clauses = set()
    for k, alpha in enumerate(assignments):
        reduced = apply_assignment(formula, alpha)
        for c in reduced.clauses:
            clauses.add(frozenset(l if abs(l) in keep else (l + k * n if l > 0 else l - k * n) for l in c))
    return CnfFormula(frozenset(clauses), n * max(1, len(assignments)))


@dataclass
class NestedProjResult:
    count: int  # root counter, before any free-variable factor
    context: AbstractionContext
    sat: TableMap  # purged
    proj: list


def run_nested_proj(formula: CnfFormula, projection: Iterable[int], abstraction: Iterable[int],
                    td: TreeDecomposition | None, subsolve: Subsolve, tie_break: str = "first",
                    heuristic: str = "min-fill", seed: int = 0,
                    row_budget: int = DEFAULT_ROW_BUDGET) -> NestedProjResult:
    """Projected counting over an abstraction that may contain non-projected variables.

    Runs the two-pass projected algorithm on a decomposition of the nested
    primal graph.  Rows whose nested part is unsatisfiable are dropped in the
    first pass; in the second pass the counters at nodes with nested parts
    are multiplied by the projected count of the conjunction of renamed
    copies, which equals the size of the intersection of the rows' nested
    model sets.
    """
    proj = frozenset(projection)
    ctx = compute_abstraction_context(formula, abstraction, td, tie_break, heuristic, seed)
    td = ctx.td
    occ = _abstract_clause_index(ctx)
    checked: set[int] = set()
    tables: list = [None] * len(td)

    def assignment(table, row) -> dict:
        return {v: row.mask >> i & 1 for i, v in enumerate(table.bag)}

    for t in td.postorder():
        kind = td.types[t]
        clauses: list = []
        if kind == LEAF and formula.has_empty_clause():
            clauses = [()]
        elif kind == INTRODUCE:
            ks = [k for k, vs in occ.get(td.changed_var(t), ()) if vs <= td.bags[t]]
            checked.update(ks)
            clauses = [ctx.abstract_clauses[k] for k in ks]
        table = sat_table_step(t, kind, td.bags[t], clauses, [tables[c] for c in td.children[t]])
        if ctx.nested_bag_vars[t]:
            nf = ctx.nested_bag_formulas[t]
            table.rows = [r for r in table.rows if subsolve(apply_assignment(nf, assignment(table, r)), frozenset())]
        tables[t] = table
    missing = [c for k, c in enumerate(ctx.abstract_clauses) if c and k not in checked]
    if missing:
        raise ValueError(f"decomposition does not cover clause {list(missing[0])}")
    sat = purge(TableMap(td, tables))

    ptables: list = [None] * len(td)
    for t in td.postorder():
        table = sat.tables[t]
        factor = None
        if ctx.nested_bag_vars[t]:
            nf = ctx.nested_bag_formulas[t]
            keep = ctx.nested_bag_vars[t] & proj

            def factor(rows, table=table, nf=nf, keep=keep):
                alphas = [assignment(table, table.rows[r]) for r in rows]
                return subsolve(conjoin_copies(nf, alphas, keep), keep)

        ptables[t] = proj_table_step(table, proj, [ptables[c] for c in td.children[t]], row_budget, factor)
    return NestedProjResult(ptables[td.root].root_total(), ctx, sat, ptables)


def nested_count(instance, abstraction: Iterable[int], projection: Iterable[int] | None = None,
                 td: TreeDecomposition | None = None, subsolve: Subsolve | None = None,
                 counting: bool = False, **kwargs) -> int:
    """Count with nested DP over ``abstraction``, including free-variable factors.

    With a ``PmcInstance`` and ``counting=False`` the projected count is
    returned; ``counting=True`` (or a bare formula without projection) counts
    models.  An abstraction reaching outside the projection switches to the
    two-pass projected variant.  The default subsolver is the exact internal
    search counter.
    """
    if isinstance(instance, PmcInstance):
        formula = instance.formula
        if projection is None and not counting:
            projection = instance.projection
    else:
        formula = instance
    if subsolve is None:
        from .hybrid import internal_fallback_count

        subsolve = internal_fallback_count
    if projection is not None and not frozenset(abstraction) <= frozenset(projection):
        res = run_nested_proj(formula, projection, abstraction, td, subsolve, **kwargs)
    else:
        res = run_nested_dp(0, formula, projection, abstraction, td, subsolve, **kwargs)
    if projection is None:
        return res.count << len(formula.free_vars)
    return res.count << len(frozenset(projection) - formula.vars)


def dump_nested_tables(res: NestedResult) -> str:
    lines = []
    ctx = res.context
    for t, table in enumerate(res.tables):
        if table is None:
            continue
        extra = ""
        if ctx.nested_bag_vars[t]:
            extra = f" nested={format_set(sorted(ctx.nested_bag_vars[t]))}"
        lines.append(f"nested t{t + 1} {table.kind} bag={format_set(table.bag)}{extra}")
        for i, (mask, count) in enumerate(table.sorted_rows(), 1):
            lines.append(f"  w{t + 1}.{i} {format_set(table.true_vars(mask))} {count}")
    return "\n".join(lines) + ("\n" if lines else "")
