"""First pass: SAT/#SAT tables along a nice tree decomposition, plus purging.

A row's bag assignment is an int bitmask whose bit ``i`` is the value of the
``i``-th smallest bag variable.  Rows are kept sorted by that mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .decompose import INTRODUCE, JOIN, LEAF, REMOVE, TreeDecomposition, decompose, make_nice
from .formula import CnfFormula, PmcInstance
from .graphs import primal_graph


@dataclass(slots=True)
class SatRow:
    mask: int
    count: int
    origins: tuple  # child-row index tuples, one entry per child
    label: int = 0  # 1-based position in the table as first built


@dataclass
class SatTable:
    node: int
    kind: str
    bag: tuple  # sorted bag variables
    rows: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def true_vars(self, row: SatRow) -> tuple:
        return tuple(v for i, v in enumerate(self.bag) if row.mask >> i & 1)

    def index(self) -> dict:
        return {row.mask: i for i, row in enumerate(self.rows)}


@dataclass
class TableMap:
    td: TreeDecomposition
    tables: list  # node id -> SatTable, or None once released

    @property
    def root_table(self) -> SatTable:
        return self.tables[self.td.root]

    def root_count(self) -> int:
        return sum(r.count for r in self.root_table.rows)


def bag_formula(formula: CnfFormula, bag: Iterable[int]) -> CnfFormula:
    """Clauses whose variables all lie inside ``bag``."""
    b = frozenset(bag)
    return CnfFormula(frozenset(c for c in formula.clauses if all(abs(l) in b for l in c)), formula.num_vars)


def compile_clause(clause: Iterable[int], bag: Sequence[int]) -> tuple[int, int]:
    """Positive and negative literal masks of ``clause`` over bag positions."""
    pos = {v: i for i, v in enumerate(bag)}
    outside = [l for l in clause if abs(l) not in pos]
    if outside:
        raise ValueError(f"clause literal {outside[0]} is outside the bag")
    pm = nm = 0
    for lit in clause:
        if lit > 0:
            pm |= 1 << pos[lit]
        else:
            nm |= 1 << pos[-lit]
    return pm, nm


def _seal(rows: list, bag: tuple) -> list:
    rows.sort(key=lambda r: r.mask)
    for i, r in enumerate(rows, 1):
        r.label = i
    assert len(rows) <= 1 << len(bag), "table exceeds 2^|bag| rows"
    return rows


def sat_table_step(node: int, kind: str, bag: Iterable[int], clauses: Iterable[Iterable[int]],
                   child_tables: Sequence[SatTable]) -> SatTable:
    """One table of the SAT algorithm with counters and origin links.

    ``clauses`` are checked only at leaf and introduce nodes; passing the
    whole bag formula is correct, the driver passes just the clauses that
    mention the introduced variable.
    """
    bag = tuple(sorted(bag))
    arity = {LEAF: 0, INTRODUCE: 1, REMOVE: 1, JOIN: 2}.get(kind)
    if arity is None or len(child_tables) != arity:
        raise ValueError(f"node {node}: {kind} node with {len(child_tables)} child tables")
    rows: list[SatRow] = []
    if kind == LEAF:
        if bag:
            raise ValueError(f"node {node}: leaf bag must be empty")
        if not any(not frozenset(c) for c in clauses):
            rows.append(SatRow(0, 1, ((),)))
    elif kind == INTRODUCE:
        child = child_tables[0]
        (v,) = set(bag) - set(child.bag)
        r = bag.index(v)
        checks = [compile_clause(c, bag) for c in clauses]
        low_mask = (1 << r) - 1
        for i, row in enumerate(child.rows):
            base = (row.mask & low_mask) | ((row.mask >> r) << (r + 1))
            for m in (base, base | 1 << r):
                if all((m & pm) or (nm & ~m) for pm, nm in checks):
                    rows.append(SatRow(m, row.count, ((i,),)))
    elif kind == REMOVE:
        child = child_tables[0]
        (v,) = set(child.bag) - set(bag)
        r = child.bag.index(v)
        low_mask = (1 << r) - 1
        merged: dict[int, SatRow] = {}
        for i, row in enumerate(child.rows):
            m = (row.mask & low_mask) | ((row.mask >> (r + 1)) << r)
            hit = merged.get(m)
            if hit is None:
                merged[m] = SatRow(m, row.count, ((i,),))
            else:
                hit.count += row.count
                hit.origins += ((i,),)
        rows = list(merged.values())
    else:
        left, right = child_tables
        if left.bag != bag or right.bag != bag:
            raise ValueError(f"node {node}: join children must share the bag")
        other = right.index()
        for i, row in enumerate(left.rows):
            j = other.get(row.mask)
            if j is not None:
                rows.append(SatRow(row.mask, row.count * right.rows[j].count, ((i, j),)))
    return SatTable(node, kind, bag, _seal(rows, bag))


class _ClauseIndex:
    """Per-variable clause occurrence lists for fast bag-formula lookup."""

    def __init__(self, formula: CnfFormula):
        self.occ: dict[int, list] = {}
        self.clauses = formula.sorted_clauses()
        for k, c in enumerate(self.clauses):
            vs = frozenset(abs(l) for l in c)
            for v in vs:
                self.occ.setdefault(v, []).append((k, vs))
        self.has_empty = formula.has_empty_clause()

    def covered_at(self, v: int, bag: frozenset) -> list[int]:
        return [k for k, vs in self.occ.get(v, ()) if vs <= bag]


def run_dp(formula: CnfFormula, td: TreeDecomposition, retain: bool = True) -> TableMap:
    """Compute the SAT table of every node in post-order.

    With ``retain=False`` child tables are dropped once their parent is
    sealed, leaving only the root table.
    """
    if not td.nice:
        td = make_nice(td)
    index = _ClauseIndex(formula)
    checked: set[int] = set()
    tables: list = [None] * len(td)
    for t in td.postorder():
        kind = td.types[t]
        kids = [tables[c] for c in td.children[t]]
        clauses: list = []
        if kind == LEAF and index.has_empty:
            clauses = [()]
        elif kind == INTRODUCE:
            ks = index.covered_at(td.changed_var(t), td.bags[t])
            checked.update(ks)
            clauses = [index.clauses[k] for k in ks]
        tables[t] = sat_table_step(t, kind, td.bags[t], clauses, kids)
        if not retain:
            for c in td.children[t]:
                tables[c] = None
    missing = [index.clauses[k] for k in range(len(index.clauses)) if index.clauses[k] and k not in checked]
    if missing:
        raise ValueError(f"decomposition does not cover clause {list(missing[0])}")
    return TableMap(td, tables)


def purge(tm: TableMap) -> TableMap:
    """Drop rows that occur in no satisfiable extension.

    Root rows are marked, marks flow down origin links, unmarked rows are
    removed and origin links are renumbered.  Row labels are kept.
    """
    td = tm.td
    if any(t is None for t in tm.tables):
        raise ValueError("purging needs retained tables")
    marked = [set() for _ in tm.tables]
    marked[td.root] = set(range(len(tm.tables[td.root].rows)))
    for t in reversed(td.postorder()):
        kids = td.children[t]
        rows = tm.tables[t].rows
        for i in marked[t]:
            for tup in rows[i].origins:
                for c, j in zip(kids, tup):
                    marked[c].add(j)
    renum = [{old: new for new, old in enumerate(sorted(m))} for m in marked]
    out = []
    for t, table in enumerate(tm.tables):
        kids = td.children[t]
        rows = []
        for old in sorted(marked[t]):
            row = table.rows[old]
            origins = tuple(
                tuple(renum[c][j] for c, j in zip(kids, tup))
                for tup in row.origins
                if all(j in renum[c] for c, j in zip(kids, tup))
            )
            rows.append(SatRow(row.mask, row.count, origins, row.label))
        out.append(SatTable(table.node, table.kind, table.bag, rows))
    return TableMap(td, out)


def _as_formula(obj) -> CnfFormula:
    return obj.formula if isinstance(obj, PmcInstance) else obj


def model_count(instance, td: TreeDecomposition | None = None, heuristic: str = "min-fill",
                seed: int = 0) -> int:
    """Number of models over all declared variables."""
    formula = _as_formula(instance)
    if td is None:
        td = decompose(primal_graph(formula), heuristic, seed)
    tm = run_dp(formula, td, retain=False)
    # variables in no clause and no bag are unconstrained
    return tm.root_count() << len(formula.free_vars - tm.td.vertices)


def format_set(vs: Iterable[int]) -> str:
    return "{" + ",".join(map(str, vs)) + "}"


def dump_sat_tables(tm: TableMap) -> str:
    """Line-oriented dump: a header per node, then ``u<node>.<row> {true vars} count``."""
    lines = []
    for t in range(len(tm.tables)):
        table = tm.tables[t]
        if table is None:
            continue
        lines.append(f"sat t{t + 1} {table.kind} bag={format_set(table.bag)}")
        for row in table.rows:
            lines.append(f"  u{t + 1}.{row.label} {format_set(table.true_vars(row))} {row.count}")
    return "\n".join(lines) + ("\n" if lines else "")
