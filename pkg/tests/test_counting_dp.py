import random

import pytest

from tdcount.counting_dp import (
    bag_formula,
    compile_clause,
    dump_sat_tables,
    model_count,
    purge,
    run_dp,
    sat_table_step,
)
from tdcount.decompose import HEURISTICS, LEAF, TreeDecomposition, decompose
from tdcount.formula import CnfFormula, PmcInstance
from tdcount.graphs import primal_graph
from tdcount.oracle import brute_count

from instances import A, B, P1, P2, example_formula, load_td, random_formula

C1, C2, C3, C4 = (frozenset(c) for c in ([-A, B, P1], [A, -B, -P1], [A, P2], [A, -P2]))


def row_sets(tm, node):
    """True-variable sets of a table given by its 1-based node number."""
    table = tm.tables[node - 1]
    return [set(table.true_vars(r)) for r in table.rows]


@pytest.fixture(scope="module")
def worked_tables():
    return run_dp(example_formula(), load_td("worked_nice.td"))


def test_bag_formula_example():
    f = example_formula()
    assert bag_formula(f, {A, B, P1}).clauses == frozenset({C1, C2})
    assert bag_formula(f, {A}).clauses == frozenset()
    assert bag_formula(f, set()).clauses == frozenset()


def test_compile_clause_masks():
    assert compile_clause([-A, B, P1], (A, B, P1)) == (0b110, 0b001)
    with pytest.raises(ValueError):
        compile_clause([P2], (A, B))


def test_golden_sat_tables(worked_tables):
    tm = worked_tables
    assert row_sets(tm, 1) == [set()]
    assert row_sets(tm, 4) == [set(), {B}, {A, B}, {P1}, {A, P1}, {A, B, P1}]
    assert row_sets(tm, 5) == [set(), {A}, {B}, {A, B}]
    assert row_sets(tm, 6) == [set(), {A}]
    assert row_sets(tm, 9) == [{A}, {A, P2}]
    assert row_sets(tm, 10) == [{A}]
    assert row_sets(tm, 11) == [{A}]
    assert row_sets(tm, 12) == [set()]
    assert tm.root_count() == 6


def test_purge_removes_dead_rows(worked_tables):
    purged = purge(worked_tables)
    assert [r.label for r in purged.tables[3].rows] == [3, 5, 6]
    assert row_sets(purged, 4) == [{A, B}, {A, P1}, {A, B, P1}]
    assert row_sets(purged, 6) == [{A}]
    # origins still point at surviving rows
    for t, table in enumerate(purged.tables):
        for row in table.rows:
            for tup in row.origins:
                for c, j in zip(purged.td.children[t], tup):
                    assert 0 <= j < len(purged.tables[c].rows)


def test_int_and_join_steps():
    leaf = sat_table_step(0, LEAF, (), [], [])
    assert [(r.mask, r.count) for r in leaf.rows] == [(0, 1)]
    # join keeps rows present in both children and multiplies counts
    left = sat_table_step(1, "int", (A,), [], [leaf])
    right = sat_table_step(2, "int", (A,), [(A,)], [leaf])
    joined = sat_table_step(3, "join", (A,), [], [left, right])
    assert [(r.mask, r.count) for r in joined.rows] == [(1, 1)]


def test_unsat_root_empty():
    f = CnfFormula.from_clauses([[1, 2], [-1], [-2]], 2)
    tm = run_dp(f, decompose(primal_graph(f)))
    assert tm.root_table.rows == []
    assert all(not t.rows for t in purge(tm).tables)


def test_empty_formula_counts_all():
    f = CnfFormula.from_clauses([], 3)
    assert model_count(f) == 8
    iso = TreeDecomposition((frozenset({1}), frozenset({2}), frozenset({3})), ((), (0,), (1,)), 2)
    assert model_count(f, iso) == 8


def test_purge_identity_when_every_row_extends():
    f = CnfFormula.from_clauses([[1, 2]], 2)
    tm = run_dp(f, decompose(primal_graph(f)))
    assert [len(t.rows) for t in purge(tm).tables] == [len(t.rows) for t in tm.tables]


def test_model_count_example_and_empty_clause():
    assert model_count(example_formula()) == 6
    assert model_count(PmcInstance(example_formula(), frozenset({P1}))) == 6
    f = CnfFormula.from_clauses([[1], []], 2)
    assert f.has_empty_clause() and model_count(f) == 0


def test_uncovered_clause_rejected():
    f = example_formula()
    td = TreeDecomposition((frozenset({A, B, P1}),), ((),), 0)
    with pytest.raises(ValueError):
        run_dp(f, td)


def test_model_count_matches_oracle():
    rng = random.Random(11)
    for _ in range(150):
        f = random_formula(rng)
        h = rng.choice(HEURISTICS)
        td = decompose(primal_graph(f), h, rng.randrange(5))
        assert model_count(f, td) == brute_count(f)
        for t, table in enumerate(run_dp(f, td).tables):
            assert len(table.rows) <= 1 << len(td.bags[t])


def test_dump_format(worked_tables):
    text = dump_sat_tables(worked_tables)
    assert "sat t4 int bag={1,2,3}" in text
    assert "  u4.3 {1,2} 1" in text
    assert text.endswith("\n")
