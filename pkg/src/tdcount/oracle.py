"""Brute-force reference counters.  Deliberately simple; used as ground truth."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .formula import CnfFormula

MAX_VARS = 24
_CHUNK = 1 << 16


class OracleBudgetError(ValueError):
    pass


def _models(formula: CnfFormula):
    """Yield (variables, boolean matrix of satisfying assignments) in chunks."""
    variables = sorted(formula.vars)
    n = len(variables)
    if n > MAX_VARS:
        raise OracleBudgetError(f"oracle refuses {n} variables (limit {MAX_VARS})")
    col = {v: i for i, v in enumerate(variables)}
    clauses = [[(col[abs(l)], l > 0) for l in c] for c in formula.clauses]
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, 1 << n, _CHUNK):
        ids = np.arange(start, min(start + _CHUNK, 1 << n), dtype=np.int64)
        bits = ((ids[:, None] >> shifts) & 1).astype(bool)
        ok = np.ones(len(ids), dtype=bool)
        for c in clauses:
            sat = np.zeros(len(ids), dtype=bool)
            for i, positive in c:
                sat |= bits[:, i] if positive else ~bits[:, i]
            ok &= sat
        yield variables, bits[ok]


def brute_count(formula: CnfFormula) -> int:
    """Models over all declared variables, by enumeration."""
    total = sum(len(m) for _, m in _models(formula))
    return total << len(formula.free_vars)


def brute_pmc(formula: CnfFormula, projection: Iterable[int]) -> int:
    """Distinct restrictions of models to ``projection``; free projected variables double."""
    proj = frozenset(projection)
    seen: set[bytes] = set()
    for variables, models in _models(formula):
        cols = [i for i, v in enumerate(variables) if v in proj]
        for row in np.unique(models[:, cols], axis=0) if len(models) else ():
            seen.add(row.tobytes())
    return len(seen) << len(proj - formula.vars)
