import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdcount.formula import (
    CnfFormula,
    DimacsError,
    apply_assignment,
    canonical_key,
    interpretation,
    parse_dimacs,
    satisfies,
    unit_propagate,
    write_dimacs,
)
from tdcount.oracle import brute_pmc

from instances import A, B, DATA, EXAMPLE_CLAUSES, P1, P2, example_formula

clauses_st = st.lists(
    st.lists(st.integers(1, 6).flatmap(lambda v: st.sampled_from([v, -v])), min_size=1, max_size=3),
    max_size=8,
)


def test_parse_simple():
    inst = parse_dimacs("p cnf 2 1\n1 -2 0")
    assert inst.formula.clauses == frozenset({frozenset({1, -2})})
    assert inst.projection == frozenset({1, 2})


def test_parse_show_lines():
    inst = parse_dimacs((DATA / "example1.cnf").read_bytes())
    assert inst.projection == frozenset({P1, P2})
    assert inst.formula == example_formula()


def test_parse_drops_tautology():
    inst = parse_dimacs("p cnf 1 1\n1 -1 0")
    assert inst.formula.clauses == frozenset()
    assert inst.formula.num_vars == 1


def test_parse_clause_spanning_lines_and_duplicates():
    inst = parse_dimacs("c hello\np cnf 3 3\n1 2\n 3 0 -1 0\n-1 0\n")
    assert inst.formula.clauses == frozenset({frozenset({1, 2, 3}), frozenset({-1})})


def test_explicit_projection_overrides_show_lines():
    inst = parse_dimacs("p cnf 3 1\nc p show 1 0\n1 2 3 0\n", projection=[2, 3])
    assert inst.projection == frozenset({2, 3})


@pytest.mark.parametrize(
    "text, line",
    [
        ("p cnf x 1\n1 0\n", 1),
        ("p dnf 2 1\n1 0\n", 1),
        ("1 2 0\n", 1),
        ("p cnf 2 1\n1 3 0\n", 2),
        ("p cnf 2 1\n1 2\n", 2),
        ("p cnf 2 1\n1 a 0\n", 2),
        ("c p show -1 0\np cnf 2 1\n1 0\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(DimacsError) as err:
        parse_dimacs(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_parse_rejects_out_of_range_projection():
    with pytest.raises(DimacsError):
        parse_dimacs("p cnf 2 1\nc p show 3 0\n1 0\n")
    with pytest.raises(DimacsError):
        parse_dimacs("p cnf 2 1\n1 0\n", projection=[5])


def test_parse_missing_header():
    with pytest.raises(DimacsError):
        parse_dimacs("c only comments\n")


@given(clauses_st, st.sets(st.integers(1, 6)))
def test_dimacs_round_trip(clauses, proj):
    f = CnfFormula.from_clauses(clauses, 6)
    back = parse_dimacs(write_dimacs(f, proj))
    assert back.formula == f
    assert back.projection == frozenset(proj)


def test_apply_assignment_example():
    f = example_formula()
    assert apply_assignment(f, {A: 1}).clauses == frozenset({frozenset({B, P1})})


def test_apply_assignment_empty_and_falsified():
    f = example_formula()
    assert apply_assignment(f, {}) == f
    g = apply_assignment(CnfFormula.from_clauses([[1]], 1), {1: 0})
    assert g.has_empty_clause()


def test_satisfies():
    f = example_formula()
    assert satisfies(interpretation({A, B}, range(1, 5)), f)
    assert not satisfies(interpretation(set(), range(1, 5)), f)
    assert satisfies({}, CnfFormula.from_clauses([], 3))
    with pytest.raises(ValueError):
        satisfies({A: 1}, f)


def test_unit_propagate_chain():
    prop = unit_propagate(CnfFormula.from_clauses([[1], [-1, 2]], 2))
    assert prop.formula.clauses == frozenset()
    assert prop.forced == {1: 1, 2: 1}
    assert prop.status == "sat-unknown"


def test_unit_propagate_conflict():
    prop = unit_propagate(CnfFormula.from_clauses([[1], [-1]], 1))
    assert prop.unsat and prop.status == "unsat"


def test_unit_propagate_no_units():
    f = example_formula()
    prop = unit_propagate(f)
    assert prop.formula == f and prop.forced == {} and not prop.unsat


@settings(max_examples=200)
@given(clauses_st)
def test_unit_propagate_preserves_models(clauses):
    f = CnfFormula.from_clauses(clauses, 6)
    prop = unit_propagate(f)
    if prop.unsat:
        assert brute_pmc(f, range(1, 7)) == 0
        return
    # models of f are exactly the models of the residue that agree with the forced values
    forced = CnfFormula.from_clauses([[v if val else -v] for v, val in prop.forced.items()], 6)
    combined = CnfFormula(prop.formula.clauses | forced.clauses, 6)
    assert brute_pmc(combined, range(1, 7)) == brute_pmc(f, range(1, 7))


def test_canonical_key_renaming_and_sets():
    f = CnfFormula.from_clauses([[2, -5]], 5)
    g = CnfFormula.from_clauses([[1, -3]], 3)
    assert canonical_key(f) == canonical_key(g)
    dup = CnfFormula.from_clauses(EXAMPLE_CLAUSES + [EXAMPLE_CLAUSES[0]], 4)
    assert canonical_key(dup) == canonical_key(example_formula())
    shuffled = list(EXAMPLE_CLAUSES)
    random.Random(3).shuffle(shuffled)
    assert canonical_key(CnfFormula.from_clauses(shuffled, 4)) == canonical_key(example_formula())


def test_canonical_key_separates_projections():
    f = example_formula()
    assert canonical_key(f, {P1, P2}) != canonical_key(f, {A, B})
    assert canonical_key(f, {P1}) != canonical_key(f, {P1, 9})


@settings(max_examples=200)
@given(clauses_st, st.sets(st.integers(1, 6)), st.permutations(range(1, 7)))
def test_equal_keys_mean_equal_counts(clauses, proj, perm):
    f = CnfFormula.from_clauses(clauses, 6)
    rename = dict(zip(range(1, 7), perm))
    g = CnfFormula.from_clauses([[rename[abs(l)] * (1 if l > 0 else -1) for l in c] for c in clauses], 6)
    gproj = {rename[v] for v in proj}
    # renaming keeps the count; whenever the keys coincide the counts must too
    assert brute_pmc(f, proj) == brute_pmc(g, gproj)
    other = CnfFormula.from_clauses(clauses[1:], 6)
    for h, hp in ((g, gproj), (other, proj)):
        if canonical_key(f, proj) == canonical_key(h, hp):
            assert brute_pmc(f, proj) == brute_pmc(h, hp)
