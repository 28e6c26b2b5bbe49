"""Bounded-occurrence 3-CNF transform and gap-promise checking at desk scale.

The transform replaces every variable occurring in more than b-2 clauses by one
fresh copy per occurrence, chained into an implication cycle whose 2-literal
consistency clauses are padded to strict 3-CNF with one fresh variable each.
Copies land on the cycle with positive and negative occurrences interleaved,
which keeps the Max-SAT deficit of the output no smaller than the input's on
every instance we test (a plain occurrence-ordered cycle does not).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .cnf import (
    EXHAUSTIVE_LIMIT,
    Clause,
    Formula,
    Literal,
    brute_force_max_sat,
    occurrence_bound,
)
from .errors import FormulaError, ParameterError


@dataclass(frozen=True)
class GapInstance:
    """A formula promised to be either satisfiable or epsilon-far from it."""

    formula: Formula
    b: int
    epsilon: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ParameterError(f"epsilon must be in (0,1), got {self.epsilon}")
        bound = occurrence_bound(self.formula)
        if bound > self.b:
            raise FormulaError(
                f"occurrence bound {bound} exceeds b={self.b}")
        if self.formula.m < self.formula.v:
            raise FormulaError(
                f"need at least as many clauses as variables (m={self.formula.m}, "
                f"v={self.formula.v})")


class PromiseKind(Enum):
    SATISFIABLE = "satisfiable"
    GAP_UNSATISFIABLE = "gap_unsatisfiable"
    PROMISE_VIOLATED = "promise_violated"


@dataclass(frozen=True)
class PromiseStatus:
    kind: PromiseKind
    max_sat: int

    @property
    def is_gap_instance(self) -> bool:
        return self.kind is not PromiseKind.PROMISE_VIOLATED


def check_gap_promise(f: Formula, epsilon: float,
                      limit: int = EXHAUSTIVE_LIMIT) -> PromiseStatus:
    """Classify f as satisfiable, gap-unsatisfiable, or promise-violating.

    The gap reading is inclusive: max-sat <= (1-epsilon)*m counts as
    gap-unsatisfiable. The threshold is compared exactly via Fraction.
    """
    best, _ = brute_force_max_sat(f, limit=limit)
    if best == f.m:
        return PromiseStatus(PromiseKind.SATISFIABLE, best)
    eps = Fraction(*Fraction(epsilon).as_integer_ratio())
    if best <= (1 - eps) * f.m:
        return PromiseStatus(PromiseKind.GAP_UNSATISFIABLE, best)
    return PromiseStatus(PromiseKind.PROMISE_VIOLATED, best)


def _interleave_by_sign(occurrences):
    """Order clause-occurrences so positive and negative literals alternate as
    evenly as possible around the copy cycle (Bresenham merge of the two runs)."""
    pos = [o for o in occurrences if not o[1]]
    neg = [o for o in occurrences if o[1]]
    if not pos or not neg:
        return occurrences
    big, small = (pos, neg) if len(pos) >= len(neg) else (neg, pos)
    out = []
    acc = 0
    si = 0
    for item in big:
        out.append(item)
        acc += len(small)
        if acc >= len(big) and si < len(small):
            out.append(small[si])
            si += 1
            acc -= len(big)
    out.extend(small[si:])
    return out


def bounded_occurrence_transform(f: Formula, b: int) -> Formula:
    """Rewrite f so that no variable occurs in more than b clauses.

    Satisfiability is preserved exactly in both directions (the implication
    cycle forces all copies of a variable equal). Output is strict 3-CNF when
    the input is; clause count grows by at most a factor of 7.
    """
    if b < 5:
        raise ParameterError(
            "b must be >= 5: each copy lands in its original clause plus two "
            "padded implication pairs (5 clauses total)")
    if occurrence_bound(f) <= b:
        return f

    next_var = f.v
    # var -> {clause index -> copy variable}, for clause rewriting
    copy_of: dict[int, dict[int, int]] = {}
    cycles: list[list[int]] = []
    for var in range(f.v):
        occ = f.occ[var]
        if len(occ) <= b - 2:
            continue
        occurrences = []
        for ci in occ:
            negs = [lit.negated for lit in f.clauses[ci].literals if lit.var == var]
            occurrences.append((ci, all(negs)))
        occurrences = _interleave_by_sign(occurrences)
        copies = []
        mapping = {}
        for ci, _ in occurrences:
            mapping[ci] = next_var
            copies.append(next_var)
            next_var += 1
        copy_of[var] = mapping
        cycles.append(copies)

    new_clauses = []
    for ci, clause in enumerate(f.clauses):
        lits = []
        for lit in clause.literals:
            mapping = copy_of.get(lit.var)
            if mapping is None:
                lits.append(lit)
            else:
                lits.append(Literal(mapping[ci], lit.negated))
        new_clauses.append(Clause(tuple(lits)))

    for copies in cycles:
        k = len(copies)
        for j in range(k):
            a, c = copies[j], copies[(j + 1) % k]
            z = next_var
            next_var += 1
            # (not a or c) padded: both clauses share the implication literals
            new_clauses.append(Clause((Literal(a, True), Literal(c), Literal(z))))
            new_clauses.append(Clause((Literal(a, True), Literal(c), Literal(z, True))))

    return Formula(next_var, new_clauses, strict=f.strict)


def strictify(f: Formula) -> Formula:
    """Pad 1- and 2-literal clauses with fresh variables into strict 3-CNF.

    A 2-literal clause (l1 or l2) becomes (l1 or l2 or z) and (l1 or l2 or -z);
    a unit clause is padded in two rounds, yielding four clauses.
    """
    next_var = f.v
    queue = [list(clause.literals) for clause in f.clauses]
    out = []
    while queue:
        lits = queue.pop(0)
        if len(lits) == 3:
            if len({lit.var for lit in lits}) != 3:
                raise FormulaError("cannot strictify a clause with repeated variables")
            out.append(Clause(tuple(lits)))
            continue
        z = next_var
        next_var += 1
        queue.append(lits + [Literal(z)])
        queue.append(lits + [Literal(z, True)])
    return Formula(next_var, out, strict=True)


def transform_report(f: Formula, psi: Formula, b: int,
                     maxsat_limit: int = EXHAUSTIVE_LIMIT) -> dict:
    """Property report for a transform run; Max-SAT entries only at desk scale."""
    report = {
        "b_requested": b,
        "b_achieved": occurrence_bound(psi),
        "clauses_in": f.m,
        "clauses_out": psi.m,
        "size_ratio": psi.m / f.m,
        "maxsat_in": None,
        "maxsat_out": None,
    }
    if f.v <= maxsat_limit and psi.v <= maxsat_limit:
        report["maxsat_in"] = brute_force_max_sat(f, limit=maxsat_limit)[0]
        report["maxsat_out"] = brute_force_max_sat(psi, limit=maxsat_limit)[0]
    return report
