"""CNF formulas, DIMACS input/output and light preprocessing.

Literals are signed integers in the DIMACS convention: ``v`` is the positive
literal of variable ``v`` and ``-v`` its negation.  A clause is a frozenset of
literals and a formula is a frozenset of clauses, so duplicates collapse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

Clause = frozenset
Assignment = Mapping[int, int]


class DimacsError(ValueError):
    """Malformed DIMACS input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _normalize(clause: Iterable[int]) -> frozenset | None:
    lits = frozenset(clause)
    for lit in lits:
        if lit == 0:
            raise ValueError("0 is not a literal")
        if -lit in lits:
            return None
    return lits


@dataclass(frozen=True)
class CnfFormula:
    clauses: frozenset = frozenset()
    num_vars: int = 0
    vars: frozenset = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        vs = frozenset(abs(lit) for c in self.clauses for lit in c)
        object.__setattr__(self, "vars", vs)
        if vs and max(vs) > self.num_vars:
            object.__setattr__(self, "num_vars", max(vs))

    @classmethod
    def from_clauses(cls, clauses: Iterable[Iterable[int]], num_vars: int = 0) -> "CnfFormula":
        """Build a formula, dropping tautologies and duplicate clauses."""
        kept = set()
        for c in clauses:
            n = _normalize(c)
            if n is not None:
                kept.add(n)
        return cls(frozenset(kept), num_vars)

    @property
    def free_vars(self) -> frozenset:
        """Declared variables that occur in no clause."""
        return frozenset(range(1, self.num_vars + 1)) - self.vars

    def has_empty_clause(self) -> bool:
        return frozenset() in self.clauses

    def sorted_clauses(self) -> list[tuple[int, ...]]:
        return sorted(tuple(sorted(c, key=lambda l: (abs(l), l < 0))) for c in self.clauses)

    def __len__(self) -> int:
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)


@dataclass(frozen=True)
class PmcInstance:
    formula: CnfFormula
    projection: frozenset

    def __post_init__(self):
        bad = [v for v in self.projection if v < 1 or v > self.formula.num_vars]
        if bad:
            raise ValueError(f"projection variables out of range: {sorted(bad)}")

    @property
    def free_projection(self) -> frozenset:
        return self.projection - self.formula.vars

    @classmethod
    def counting(cls, formula: CnfFormula) -> "PmcInstance":
        """Instance whose projected count is the plain model count."""
        return cls(formula, frozenset(range(1, formula.num_vars + 1)))


def parse_dimacs(text: bytes | str, projection: Iterable[int] | None = None) -> PmcInstance:
    """Parse DIMACS CNF, honouring ``c p show ... 0`` projection lines.

    Clauses may span several lines.  Without show lines (and without an
    explicit ``projection``) every declared variable is projected, which makes
    the projected count equal to the model count.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    num_vars = num_clauses = None
    clauses: list[list[int]] = []
    shown: set[int] | None = None
    pending: list[int] = []
    pending_line = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("c"):
            parts = line.split()
            if len(parts) >= 3 and parts[0] == "c" and parts[1] == "p" and parts[2] == "show":
                shown = set() if shown is None else shown
                try:
                    vals = [int(p) for p in parts[3:]]
                except ValueError:
                    raise DimacsError("non-integer in show line", lineno) from None
                if vals and vals[-1] == 0:
                    vals = vals[:-1]
                if any(v <= 0 for v in vals):
                    raise DimacsError("show line lists a non-positive variable", lineno)
                shown.update(vals)
            continue
        if line.startswith("p"):
            parts = line.split()
            if num_vars is not None:
                raise DimacsError("duplicate header", lineno)
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                num_vars, num_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"malformed header {line!r}", lineno) from None
            if num_vars < 0 or num_clauses < 0:
                raise DimacsError("negative header value", lineno)
            continue
        if num_vars is None:
            raise DimacsError("clause before header", lineno)
        try:
            lits = [int(p) for p in line.split()]
        except ValueError:
            raise DimacsError(f"non-integer literal in {line!r}", lineno) from None
        for lit in lits:
            if lit == 0:
                clauses.append(pending)
                pending = []
                continue
            if abs(lit) > num_vars:
                raise DimacsError(f"literal {lit} out of range (num_vars={num_vars})", lineno)
            if not pending:
                pending_line = lineno
            pending.append(lit)
    if num_vars is None:
        raise DimacsError("missing 'p cnf' header")
    if pending:
        raise DimacsError("clause not terminated by 0", pending_line)
    formula = CnfFormula.from_clauses(clauses, num_vars)
    if projection is not None:
        proj = frozenset(projection)
    elif shown is not None:
        proj = frozenset(shown)
    else:
        proj = frozenset(range(1, num_vars + 1))
    bad = sorted(v for v in proj if v > num_vars)
    if bad:
        raise DimacsError(f"projection variables out of range: {bad}")
    return PmcInstance(formula, proj)


def write_dimacs(formula: CnfFormula, projection: Iterable[int] | None = None) -> str:
    lines = [f"p cnf {formula.num_vars} {len(formula.clauses)}"]
    if projection is not None:
        lines.append(" ".join(["c p show", *map(str, sorted(projection)), "0"]))
    for c in formula.sorted_clauses():
        lines.append(" ".join([*map(str, c), "0"]))
    return "\n".join(lines) + "\n"


def apply_assignment(formula: CnfFormula, alpha: Assignment) -> CnfFormula:
    """Return ``F[alpha]``: drop satisfied clauses, strip falsified literals."""
    if not alpha:
        return formula
    out = set()
    for c in formula.clauses:
        reduced = []
        sat = False
        for lit in c:
            val = alpha.get(abs(lit))
            if val is None:
                reduced.append(lit)
            elif bool(val) == (lit > 0):
                sat = True
                break
        if not sat:
            out.add(frozenset(reduced))
    return CnfFormula(frozenset(out), formula.num_vars)


def satisfies(assignment: Assignment, formula: CnfFormula) -> bool:
    missing = formula.vars - assignment.keys()
    if missing:
        raise ValueError(f"assignment is not total, missing {sorted(missing)}")
    return not apply_assignment(formula, assignment).clauses


def interpretation(true_vars: Iterable[int], variables: Iterable[int]) -> dict[int, int]:
    """The assignment induced by a set of true variables over ``variables``."""
    t = set(true_vars)
    return {v: int(v in t) for v in variables}


@dataclass(frozen=True)
class Propagation:
    formula: CnfFormula
    forced: dict
    unsat: bool

    @property
    def status(self) -> str:
        return "unsat" if self.unsat else "sat-unknown"


def unit_propagate(formula: CnfFormula) -> Propagation:
    """Run unit propagation to a fixpoint."""
    forced: dict[int, int] = {}
    clauses = [set(c) for c in formula.clauses]
    if any(not c for c in clauses):
        return Propagation(CnfFormula(frozenset([frozenset()]), formula.num_vars), forced, True)
    watch: dict[int, list[int]] = {}
    for i, c in enumerate(clauses):
        for lit in c:
            watch.setdefault(abs(lit), []).append(i)
    alive = [True] * len(clauses)
    queue = [next(iter(c)) for c in clauses if len(c) == 1]
    while queue:
        lit = queue.pop()
        var = abs(lit)
        val = int(lit > 0)
        if var in forced:
            if forced[var] != val:
                return Propagation(CnfFormula(frozenset([frozenset()]), formula.num_vars), forced, True)
            continue
        forced[var] = val
        for i in watch.get(var, ()):
            if not alive[i]:
                continue
            c = clauses[i]
            if lit in c:
                alive[i] = False
                continue
            c.discard(-lit)
            if not c:
                return Propagation(CnfFormula(frozenset([frozenset()]), formula.num_vars), forced, True)
            if len(c) == 1:
                queue.append(next(iter(c)))
    rest = frozenset(frozenset(c) for i, c in enumerate(clauses) if alive[i])
    return Propagation(CnfFormula(rest, formula.num_vars), forced, False)


def canonical_key(formula: CnfFormula, projection: Iterable[int] | None = None) -> bytes:
    """Renaming-invariant byte key of a formula (and optional projection).

    Variables are renamed in order of first occurrence over the sorted clause
    list; the renamed clauses are sorted again.  Equal keys imply the inputs
    are equal up to variable renaming, so any count stored under a key is
    valid for every formula mapping to it.
    """
    ordered = formula.sorted_clauses()
    rename: dict[int, int] = {}
    for c in ordered:
        for lit in c:
            if abs(lit) not in rename:
                rename[abs(lit)] = len(rename) + 1
    renamed = sorted(
        tuple(sorted(((rename[abs(l)] if l > 0 else -rename[abs(l)]) for l in c), key=lambda l: (abs(l), l < 0)))
        for c in ordered
    )
    body = ";".join(",".join(map(str, c)) for c in renamed)
    if projection is not None:
        proj = set(projection)
        marks = sorted(rename[v] for v in proj if v in rename)
        extra = len(proj - rename.keys())
        body += "|" + ",".join(map(str, marks)) + f"|{extra}"
    return body.encode()
