import random

import pytest

from tdcount.formula import CnfFormula
from tdcount.oracle import MAX_VARS, OracleBudgetError, brute_count, brute_pmc

from instances import EXAMPLE_PROJECTION, example_formula, random_instance


def test_example_values():
    f = example_formula()
    assert brute_count(f) == 6
    assert brute_pmc(f, EXAMPLE_PROJECTION) == 4


def test_edge_cases():
    assert brute_count(CnfFormula.from_clauses([], 3)) == 8
    assert brute_count(CnfFormula.from_clauses([[1], []], 2)) == 0
    assert brute_pmc(CnfFormula.from_clauses([[1], []], 2), {1}) == 0
    assert brute_pmc(example_formula(), set()) == 1


def test_full_projection_is_model_count():
    rng = random.Random(2)
    for _ in range(50):
        f, _ = random_instance(rng)
        assert brute_pmc(f, range(1, f.num_vars + 1)) == brute_count(f)


def test_adding_clauses_never_increases_counts():
    rng = random.Random(5)
    for _ in range(50):
        f, proj = random_instance(rng)
        v = rng.randint(1, f.num_vars)
        extra = CnfFormula.from_clauses([list(c) for c in f.clauses] + [[v if rng.random() < 0.5 else -v]], f.num_vars)
        assert brute_count(extra) <= brute_count(f)
        assert brute_pmc(extra, proj) <= brute_pmc(f, proj)


def test_refuses_large_formulas():
    n = MAX_VARS + 1
    f = CnfFormula.from_clauses([[v, v + 1] for v in range(1, n)], n)
    with pytest.raises(OracleBudgetError):
        brute_count(f)
