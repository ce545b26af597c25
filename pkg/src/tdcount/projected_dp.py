"""Second pass: projected counting over equivalence classes of purged SAT rows.

For every node and every class ``C`` of rows agreeing on the projection
variables, a PROJ table holds, for each non-empty subset ``s`` of ``C``:

* ``pcnt(s)``: the number of projected models reachable from some row of ``s``
  (a union count);
* ``ipmc(s)``: the number reachable from every row of ``s`` (an intersection
  count), which is the stored counter.

The two are linked by inclusion-exclusion in both directions.  The table
builder uses that to compute whole classes with subset-sum transforms.  The
per-subset definitions (``sipmc``, ``pcnt``, ``ipmc``) are kept as reference
operations and cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .counting_dp import SatTable, TableMap, format_set, purge, run_dp
from .decompose import INTRODUCE, JOIN, LEAF, TreeDecomposition, decompose
from .formula import CnfFormula, PmcInstance
from .graphs import primal_graph

DEFAULT_ROW_BUDGET = 1 << 20


class ResourceLimitError(RuntimeError):
    """A configured size budget would be exceeded."""


class RowBudgetExceeded(ResourceLimitError):
    def __init__(self, node: int, rows: int, budget: int):
        self.node, self.rows, self.budget = node, rows, budget
        super().__init__(f"width too high for projected pass: node t{node + 1} needs {rows} rows (budget {budget})")


def _proj_mask(bag: Sequence[int], projection: frozenset) -> int:
    return sum(1 << i for i, v in enumerate(bag) if v in projection)


def buckets(table: SatTable, projection: Iterable[int]) -> list[tuple[int, ...]]:
    """Row indices grouped by their assignment to the projection variables.

    Classes are ordered by their first row; rows keep table order.
    """
    pm = _proj_mask(table.bag, frozenset(projection))
    groups: dict[int, list[int]] = {}
    for i, row in enumerate(table.rows):
        groups.setdefault(row.mask & pm, []).append(i)
    return [tuple(g) for g in groups.values()]


def _popcounts(k: int) -> np.ndarray:
    pc = np.zeros(1 << k, dtype=np.int64)
    for i in range(k):
        pc[1 << i:1 << (i + 1)] = pc[:1 << i] + 1
    return pc


def flip_transform(values: np.ndarray) -> np.ndarray:
    """``g(s) = sum over non-empty r within s of (-1)^(|r|-1) f(r)``.

    Maps intersection counts to union counts and back (it is an involution).
    ``values`` is an object array indexed by subset mask; entry 0 is ignored.
    """
    n = len(values)
    k = n.bit_length() - 1
    sign = np.where(_popcounts(k) % 2 == 1, 1, -1).astype(object)
    a = values * sign
    a[0] = 0
    for i in range(k):
        view = a.reshape(-1, 2, 1 << i)
        view[:, 1, :] += view[:, 0, :]
    return a


@dataclass
class ProjTable:
    """Counters of one node, stored per class over groups of interchangeable rows.

    Rows of a class that reach exactly the same projected models are grouped;
    ``ipmc``/``pcnt`` arrays are indexed by masks over group positions, and
    ``where`` maps a row index to (class, group position).
    """

    node: int
    classes: list  # tuples of SAT row indices
    ipmc: list  # per class: object array indexed by group mask
    pcnt: list
    groups: list | None = None  # per class: group position of each row of the class
    where: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.groups is None:
            self.groups = [tuple(range(len(c))) for c in self.classes]
        if not self.where:
            for ci, cls in enumerate(self.classes):
                for r, g in zip(cls, self.groups[ci]):
                    self.where[r] = (ci, g)

    def locate(self, rows: Iterable[int]) -> tuple[int, int] | None:
        """(class, subset mask) of a row set, or None when it spans classes."""
        ci, mask = None, 0
        for r in rows:
            c, pos = self.where[r]
            if ci is None:
                ci = c
            elif c != ci:
                return None
            mask |= 1 << pos
        return None if ci is None else (ci, mask)

    def counter(self, rows: Iterable[int]) -> int:
        """Stored ipmc of a row set; 0 when the rows are not in one class."""
        hit = self.locate(rows)
        return 0 if hit is None else int(self.ipmc[hit[0]][hit[1]])

    def num_rows(self) -> int:
        """Stored counters (one per non-empty set of groups)."""
        return sum(len(a) - 1 for a in self.ipmc)

    def logical_rows(self) -> int:
        """Non-empty row subsets the stored counters stand for."""
        return sum((1 << len(c)) - 1 for c in self.classes)

    def root_total(self) -> int:
        return sum(int(a[len(a) - 1]) for a in self.ipmc)


def sipmc(child_tables: Sequence[ProjTable], origins: Iterable[tuple]) -> int:
    """Product over children of the stored counter of each child's projection of ``origins``."""
    origins = list(origins)
    result = 1
    for i, child in enumerate(child_tables):
        result *= child.counter({tup[i] for tup in origins})
        if not result:
            return 0
    return result


def _nonempty_subsets(items: Sequence):
    for mask in range(1, 1 << len(items)):
        yield mask, [items[i] for i in range(len(items)) if mask >> i & 1]


def pcnt(table: SatTable, sigma: Iterable[int], child_tables: Sequence[ProjTable]) -> int:
    """Inclusion-exclusion over origin subsets of the rows ``sigma``."""
    if table.kind == LEAF:
        raise ValueError("pcnt is undefined at leaves")
    origins = sorted({tup for r in sigma for tup in table.rows[r].origins})
    total = 0
    for _, sub in _nonempty_subsets(origins):
        total += (-1) ** (len(sub) - 1) * sipmc(child_tables, sub)
    return total


def ipmc(table: SatTable, sigma: Iterable[int], child_tables: Sequence[ProjTable],
         memo: dict | None = None) -> int:
    """Recursive intersection count with the absolute value applied at each level."""
    sigma = tuple(sorted(sigma))
    if table.kind == LEAF:
        return 1
    memo = {} if memo is None else memo
    if sigma in memo:
        return memo[sigma]
    total = pcnt(table, sigma, child_tables)
    for mask, rho in _nonempty_subsets(sigma):
        if mask != (1 << len(sigma)) - 1:
            total += (-1) ** len(rho) * ipmc(table, rho, child_tables, memo)
    memo[sigma] = abs(total)
    return memo[sigma]


def _with_factor(table: SatTable, cls: tuple, child_tables: Sequence[ProjTable],
                 factor: Callable[[tuple], int]) -> np.ndarray:
    """Intersection counters of a leaf or introduce node whose rows carry extra model sets.

    The extra sets live on variables disjoint from everything below, so the
    intersection over a row set is the child intersection times ``factor``.
    """
    k = len(cls)
    size = 1 << k
    inter = np.zeros(size, dtype=object)
    child_mask = [0] * size
    child_class = None
    if table.kind == INTRODUCE:
        child = child_tables[0]
        for pos, r in enumerate(cls):
            ((i,),) = table.rows[r].origins
            child_class, cpos = child.where[i]
            bit = 1 << pos
            for m in range(bit, bit << 1):
                child_mask[m] = child_mask[m - bit] | 1 << cpos
    for m in range(1, size):
        base = 1 if child_class is None else child_tables[0].ipmc[child_class][child_mask[m]]
        if base:
            inter[m] = base * factor(tuple(cls[p] for p in range(k) if m >> p & 1))
    return inter


def _small_counter(table: SatTable, cls: tuple, child_tables: Sequence[ProjTable],
                   factor: Callable[[tuple], int] | None) -> Callable[[tuple], int]:
    """Intersection count of one or two rows of ``cls`` (given by position)."""
    if factor is not None:
        def inter(pos):
            base = 1
            if table.kind == INTRODUCE:
                base = child_tables[0].counter({table.rows[cls[p]].origins[0][0] for p in pos})
            return base * factor(tuple(cls[p] for p in pos)) if base else 0
        return inter
    if table.kind == LEAF:
        return lambda pos: 1
    if table.kind == JOIN:
        left, right = child_tables

        def inter(pos):
            origins = [table.rows[cls[p]].origins[0] for p in pos]
            return left.counter({i for i, _ in origins}) * right.counter({j for _, j in origins})
        return inter
    child = child_tables[0]

    def union(pos):
        acc: dict[int, int] = {}
        for p in pos:
            for (i,) in table.rows[cls[p]].origins:
                ci, g = child.where[i]
                acc[ci] = acc.get(ci, 0) | 1 << g
        return sum(int(child.pcnt[ci][m]) for ci, m in acc.items())

    def inter(pos):
        if len(pos) == 1:
            return union(pos)
        return sum(union((p,)) for p in pos) - union(pos)
    return inter


def _group_rows(cls: tuple, inter: Callable[[tuple], int]) -> tuple[list[int], tuple[int, ...]]:
    """Representatives and group positions of rows with identical projected model sets.

    Two rows reach the same set exactly when both singletons and the pair
    have the same intersection count.
    """
    reps: list[int] = []
    single: list[int] = []
    groups = []
    for pos in range(len(cls)):
        c = inter((pos,))
        for g, rp in enumerate(reps):
            if single[g] == c and inter((rp, pos)) == c:
                groups.append(g)
                break
        else:
            groups.append(len(reps))
            reps.append(pos)
            single.append(c)
    return reps, tuple(groups)


def proj_table_step(table: SatTable, projection: frozenset, child_tables: Sequence[ProjTable],
                    row_budget: int = DEFAULT_ROW_BUDGET,
                    factor: Callable[[tuple], int] | None = None) -> ProjTable:
    """PROJ table of one node from its purged SAT table and the child PROJ tables.

    ``factor`` (leaf and introduce nodes only) maps a set of row indices to
    the size of the intersection of additional per-row model sets.
    """
    if factor is not None and table.kind not in (LEAF, INTRODUCE):
        raise ValueError("extra factors are only supported at leaf and introduce nodes")
    classes = buckets(table, projection)
    grouped = []
    need = 0
    for cls in classes:
        reps, groups = _group_rows(cls, _small_counter(table, cls, child_tables, factor))
        grouped.append((tuple(cls[p] for p in reps), groups))
        need += (1 << len(reps)) - 1
        if need > row_budget:
            raise RowBudgetExceeded(table.node, need, row_budget)
    ipmcs, pcnts = [], []
    for cls, _ in grouped:
        k = len(cls)
        size = 1 << k
        if factor is not None:
            inter = _with_factor(table, cls, child_tables, factor)
            ipmcs.append(inter)
            pcnts.append(flip_transform(inter))
            continue
        if table.kind == LEAF:
            inter = np.ones(size, dtype=object)
            inter[0] = 0
            ipmcs.append(inter)
            pcnts.append(inter.copy())
            continue
        if table.kind == JOIN:
            left, right = child_tables
            inter = np.zeros(size, dtype=object)
            lm = [0] * size
            rm = [0] * size
            lc = rc = None
            for pos, r in enumerate(cls):
                ((i, j),) = table.rows[r].origins
                lc, lpos = left.where[i]
                rc, rpos = right.where[j]
                bit = 1 << pos
                for m in range(bit, bit << 1):
                    lm[m] = lm[m - bit] | 1 << lpos
                    rm[m] = rm[m - bit] | 1 << rpos
            la, ra = left.ipmc[lc], right.ipmc[rc]
            for m in range(1, size):
                inter[m] = la[lm[m]] * ra[rm[m]]
            ipmcs.append(inter)
            pcnts.append(flip_transform(inter))
            continue
        child = child_tables[0]
        # per row: child class -> mask of origin groups in that class
        per_row = []
        for r in cls:
            acc: dict[int, int] = {}
            for (i,) in table.rows[r].origins:
                ci, pos = child.where[i]
                acc[ci] = acc.get(ci, 0) | 1 << pos
            per_row.append(acc)
        union = np.zeros(size, dtype=object)
        masks: list = [None] * size
        masks[0] = {}
        for pos in range(k):
            bit = 1 << pos
            extra = per_row[pos]
            for m in range(bit, bit << 1):
                merged = dict(masks[m - bit])
                for ci, sub in extra.items():
                    merged[ci] = merged.get(ci, 0) | sub
                masks[m] = merged
                union[m] = sum(child.pcnt[ci][sub] for ci, sub in merged.items())
        pcnts.append(union)
        ipmcs.append(flip_transform(union))
    return ProjTable(table.node, classes, ipmcs, pcnts, [g for _, g in grouped])


def proj_rows_bound_ok(proj: ProjTable, bag_size: int) -> bool:
    if bag_size >= 6:  # 2^(2^6) exceeds any table that fits in memory
        return True
    return proj.num_rows() <= 1 << (1 << bag_size)


@dataclass
class ProjResult:
    count: int
    raw: TableMap  # SAT tables as built
    sat: TableMap  # purged SAT tables
    proj: list  # node id -> ProjTable
    max_rows: int


def run_proj(formula: CnfFormula, projection: Iterable[int], td: TreeDecomposition,
             row_budget: int = DEFAULT_ROW_BUDGET) -> ProjResult:
    """SAT pass, purge, then the PROJ pass in post-order."""
    proj_set = frozenset(projection)
    raw = run_dp(formula, td, retain=True)
    sat = purge(raw)
    td = sat.td
    tables: list = [None] * len(td)
    max_rows = 0
    for t in td.postorder():
        kids = [tables[c] for c in td.children[t]]
        tables[t] = proj_table_step(sat.tables[t], proj_set, kids, row_budget)
        assert proj_rows_bound_ok(tables[t], len(td.bags[t])), "PROJ table exceeds 2^(2^|bag|) rows"
        max_rows = max(max_rows, tables[t].num_rows())
    free = len(proj_set - formula.vars - td.vertices)
    return ProjResult(tables[td.root].root_total() << free, raw, sat, tables, max_rows)


def pmc_count(instance, projection: Iterable[int] | None = None, td: TreeDecomposition | None = None,
              heuristic: str = "min-fill", seed: int = 0, row_budget: int = DEFAULT_ROW_BUDGET) -> int:
    """Projected model count via the two-pass algorithm.

    Accepts a ``PmcInstance`` or a formula plus ``projection``.
    """
    if isinstance(instance, PmcInstance):
        formula = instance.formula
        projection = instance.projection if projection is None else projection
    else:
        formula = instance
        if projection is None:
            projection = range(1, formula.num_vars + 1)
    if td is None:
        td = decompose(primal_graph(formula), heuristic, seed)
    return run_proj(formula, projection, td, row_budget).count



def dump_proj_tables(res: ProjResult) -> str:
    """One header per node, then ``v<node>.<i> {<J1>,<J2>,...} counter`` per subset."""
    lines = []
    for t, proj in enumerate(res.proj):
        sat = res.sat.tables[t]
        lines.append(f"proj t{t + 1} {sat.kind} bag={format_set(sat.bag)}")
        n = 0
        for ci, cls in enumerate(proj.classes):
            groups = proj.groups[ci]
            for mask in range(1, 1 << len(cls)):
                n += 1
                chosen = [pos for pos in range(len(cls)) if mask >> pos & 1]
                members = ",".join("<" + format_set(sat.true_vars(sat.rows[cls[pos]])) + ">" for pos in chosen)
                gmask = 0
                for pos in chosen:
                    gmask |= 1 << groups[pos]
                lines.append(f"  v{t + 1}.{n} {{{members}}} {proj.ipmc[ci][gmask]}")
    return "\n".join(lines) + ("\n" if lines else "")
