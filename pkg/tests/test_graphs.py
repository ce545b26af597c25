import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdcount.formula import CnfFormula
from tdcount.graphs import (
    Graph,
    connected_components,
    nested_primal_graph,
    nested_primal_graph_by_paths,
    primal_graph,
)

from instances import A, B, P1, P2, example_formula

clauses_st = st.lists(
    st.lists(st.integers(1, 8).flatmap(lambda v: st.sampled_from([v, -v])), min_size=1, max_size=3),
    min_size=1,
    max_size=10,
)


def test_primal_graph_example():
    g = primal_graph(example_formula())
    assert g.edges() == {(A, B), (A, P1), (B, P1), (A, P2)}
    assert g.vertices == frozenset({A, B, P1, P2})
    assert g.degree(A) == 3 and g.neighbors(P2) == frozenset({A})


def test_primal_graph_trivial():
    assert primal_graph(CnfFormula.from_clauses([], 3)).vertices == frozenset()
    tri = primal_graph(CnfFormula.from_clauses([[1, -2, 3]], 3))
    assert tri.edges() == {(1, 2), (1, 3), (2, 3)}


def test_components():
    g = primal_graph(example_formula())
    assert connected_components(g) == [frozenset({A, B, P1, P2})]
    assert connected_components(g.without({A, B})) == [frozenset({P1}), frozenset({P2})]
    assert connected_components(Graph.from_edges([], [])) == []


def test_nested_primal_graph_example():
    f = example_formula()
    assert nested_primal_graph(f, {A, B}).edges() == {(A, B)}
    assert nested_primal_graph(f, {P1, P2}).edges() == {(P1, P2)}
    assert nested_primal_graph(f, f.vars).edges() == primal_graph(f).edges()


def test_nested_primal_graph_rejects_unknown_vars():
    with pytest.raises(ValueError):
        nested_primal_graph(example_formula(), {7})


def test_to_dot_lists_edges():
    dot = primal_graph(example_formula()).to_dot()
    assert dot.startswith("graph G {") and "1 -- 2" in dot


@settings(max_examples=200)
@given(clauses_st, st.sets(st.integers(1, 8)))
def test_nested_graph_matches_path_search(clauses, abstraction):
    f = CnfFormula.from_clauses(clauses, 8)
    a = abstraction & f.vars
    assert nested_primal_graph(f, a).edges() == nested_primal_graph_by_paths(f, a).edges()
