"""Interval reasoning over query predicates and constraints.

Terms (columns and parameters) linked by equality atoms are merged into one
class, and each class carries an :class:`Interval`. Constraint facts are
attached to every column; since constraints are vacuous on NULL, a class whose
interval is empty only empties a branch when the class must be non-NULL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from ..constraints import Bound, ConstraintSet, Inclusion, Numerical, Presence
from ..schema import NUMERIC_TYPES, Schema
from ..sqlir.ir import (
    And,
    ColumnRef,
    Compare,
    Const,
    Expr,
    InList,
    IsNull,
    Lit,
    Or,
    Param,
    Query,
)
from ..sqlir.template import filter_columns

MAX_BRANCHES = 64


class TooManyBranches(ValueError):
    pass


def _cmp_ok(a, b) -> bool:
    num = (int, float)
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool)
    return (isinstance(a, num) and isinstance(b, num)) or (isinstance(a, str) and isinstance(b, str))


@dataclass(frozen=True)
class Interval:
    lower: Bound | None = None
    upper: Bound | None = None
    not_null: bool = False
    values: frozenset | None = None  # None: unrestricted
    excluded: frozenset = frozenset()
    integer: bool = False

    # -- construction helpers --

    def _norm_lower(self, b: Bound) -> Bound:
        if self.integer and isinstance(b.value, (int, float)) and not isinstance(b.value, bool):
            v = math.floor(b.value) + 1 if not b.inclusive else math.ceil(b.value)
            return Bound(int(v), True)
        return b

    def _norm_upper(self, b: Bound) -> Bound:
        if self.integer and isinstance(b.value, (int, float)) and not isinstance(b.value, bool):
            v = math.ceil(b.value) - 1 if not b.inclusive else math.floor(b.value)
            return Bound(int(v), True)
        return b

    def with_lower(self, b: Bound) -> "Interval":
        b = self._norm_lower(b)
        cur = self.lower
        if cur is not None and _cmp_ok(cur.value, b.value):
            if cur.value > b.value or (cur.value == b.value and not cur.inclusive):
                return self
        elif cur is not None:
            return self
        return replace(self, lower=b)

    def with_upper(self, b: Bound) -> "Interval":
        b = self._norm_upper(b)
        cur = self.upper
        if cur is not None and _cmp_ok(cur.value, b.value):
            if cur.value < b.value or (cur.value == b.value and not cur.inclusive):
                return self
        elif cur is not None:
            return self
        return replace(self, upper=b)

    def with_values(self, values: Iterable) -> "Interval":
        vs = frozenset(values)
        return replace(self, values=vs if self.values is None else self.values & vs)

    def with_excluded(self, v) -> "Interval":
        return replace(self, excluded=self.excluded | {v})

    def meet(self, other: "Interval") -> "Interval":
        out = replace(self, not_null=self.not_null or other.not_null, integer=self.integer or other.integer)
        if other.lower is not None:
            out = out.with_lower(other.lower)
        if other.upper is not None:
            out = out.with_upper(other.upper)
        if other.values is not None:
            out = out.with_values(other.values)
        return replace(out, excluded=out.excluded | other.excluded)

    # -- queries --

    def admits(self, v) -> bool:
        if v in self.excluded:
            return False
        if self.values is not None and v not in self.values:
            return False
        if self.integer and isinstance(v, float) and not v.is_integer():
            return False
        lo, hi = self.lower, self.upper
        if lo is not None:
            if not _cmp_ok(v, lo.value):
                return False
            if v < lo.value or (v == lo.value and not lo.inclusive):
                return False
        if hi is not None:
            if not _cmp_ok(v, hi.value):
                return False
            if v > hi.value or (v == hi.value and not hi.inclusive):
                return False
        return True

    def finite_values(self) -> list | None:
        """Explicit admitted values when the interval is a small finite set."""
        if self.values is not None:
            return sorted((v for v in self.values if self.admits(v)), key=repr)
        lo, hi = self.lower, self.upper
        if self.integer and lo is not None and hi is not None and isinstance(lo.value, int) and isinstance(hi.value, int):
            if hi.value - lo.value <= 10_000:
                return [v for v in range(lo.value, hi.value + 1) if self.admits(v)]
        return None

    @property
    def is_empty(self) -> bool:
        """No non-NULL value fits."""
        fv = self.finite_values()
        if fv is not None:
            return not fv
        lo, hi = self.lower, self.upper
        if lo is not None and hi is not None and _cmp_ok(lo.value, hi.value):
            if lo.value > hi.value:
                return True
            if lo.value == hi.value:
                return not (lo.inclusive and hi.inclusive) or lo.value in self.excluded
        return False

    def entails(self, op: str, v: Any) -> bool:
        """Every admitted non-NULL value ``x`` satisfies ``x op v``."""
        if self.is_empty:
            return True
        fv = self.finite_values()
        if fv is not None:
            try:
                return all(_apply(op, x, v) for x in fv)
            except TypeError:
                return False
        lo, hi = self.lower, self.upper
        if op == "<>":
            return not self.admits(v)
        if op in (">", ">="):
            if lo is None or not _cmp_ok(lo.value, v):
                return False
            return lo.value > v or (lo.value == v and (op == ">=" or not lo.inclusive))
        if op in ("<", "<="):
            if hi is None or not _cmp_ok(hi.value, v):
                return False
            return hi.value < v or (hi.value == v and (op == "<=" or not hi.inclusive))
        if op == "=":
            return lo is not None and hi is not None and lo == hi and lo.inclusive and lo.value == v
        return False

    def tighter_lower_than(self, other: "Interval") -> bool:
        a, b = self.lower, other.lower
        if a is None:
            return False
        if b is None:
            return True
        if not _cmp_ok(a.value, b.value):
            return False
        return a.value > b.value or (a.value == b.value and b.inclusive and not a.inclusive)

    def tighter_upper_than(self, other: "Interval") -> bool:
        a, b = self.upper, other.upper
        if a is None:
            return False
        if b is None:
            return True
        if not _cmp_ok(a.value, b.value):
            return False
        return a.value < b.value or (a.value == b.value and b.inclusive and not a.inclusive)

    def hull(self, other: "Interval") -> "Interval":
        """Smallest interval containing both (used across DNF branches)."""
        def lo_min(a, b):
            if a is None or b is None or not _cmp_ok(a.value, b.value):
                return None
            if a.value != b.value:
                return a if a.value < b.value else b
            return Bound(a.value, a.inclusive or b.inclusive)

        def hi_max(a, b):
            if a is None or b is None or not _cmp_ok(a.value, b.value):
                return None
            if a.value != b.value:
                return a if a.value > b.value else b
            return Bound(a.value, a.inclusive or b.inclusive)

        values = None if self.values is None or other.values is None else self.values | other.values
        return Interval(
            lo_min(self.lower, other.lower),
            hi_max(self.upper, other.upper),
            self.not_null and other.not_null,
            values,
            self.excluded & other.excluded,
            self.integer and other.integer,
        )


def _apply(op: str, a, b) -> bool:
    return {
        "=": a == b,
        "<>": a != b,
        "<": a < b if _cmp_ok(a, b) else False,
        "<=": a <= b if _cmp_ok(a, b) else False,
        ">": a > b if _cmp_ok(a, b) else False,
        ">=": a >= b if _cmp_ok(a, b) else False,
    }[op]


def atom_interval(op: str, v: Any, integer: bool) -> Interval:
    base = Interval(not_null=True, integer=integer)
    if op == "=":
        return base.with_values([v]).with_lower(Bound(v, True)).with_upper(Bound(v, True))
    if op == "<>":
        return base.with_excluded(v)
    if op in (">", ">="):
        return base.with_lower(Bound(v, op == ">="))
    return base.with_upper(Bound(v, op == "<="))


# -- DNF --------------------------------------------------------------------


def to_dnf(e: Expr | None, limit: int = MAX_BRANCHES) -> list[list[Expr]]:
    """Disjunctive normal form as a list of conjunctions (lists of leaves).

    ``Not`` nodes and other unanalysed forms stay as opaque leaves.
    """
    if e is None:
        return [[]]
    if isinstance(e, Or):
        out: list[list[Expr]] = []
        for item in e.items:
            out.extend(to_dnf(item, limit))
            if len(out) > limit:
                raise TooManyBranches(len(out))
        return out
    if isinstance(e, And):
        acc: list[list[Expr]] = [[]]
        for item in e.items:
            parts = to_dnf(item, limit)
            acc = [a + p for a in acc for p in parts]
            if len(acc) > limit:
                raise TooManyBranches(len(acc))
        return acc
    return [[e]]


# -- facts ------------------------------------------------------------------

Term = tuple  # ("col", table, column) | ("param", index)


def _col_term(c: ColumnRef) -> Term:
    return ("col", c.table, c.column)


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[Term, Term] = {}

    def find(self, x: Term) -> Term:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: Term, b: Term) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass
class BranchFacts:
    empty: bool
    classes: dict[Term, Interval] = field(default_factory=dict)
    uf: _UnionFind = field(default_factory=_UnionFind)
    column_facts: dict[tuple[str, str], Interval] = field(default_factory=dict)

    def interval(self, table: str, column: str) -> Interval:
        root = self.uf.find(("col", table, column))
        return self.classes.get(root, self.column_facts.get((table, column), Interval()))

    def same_class(self, a: ColumnRef, b: ColumnRef) -> bool:
        return self.uf.find(_col_term(a)) == self.uf.find(_col_term(b))


def column_fact(schema: Schema, cs: ConstraintSet, table: str, column: str) -> tuple[Interval, bool]:
    """Interval implied by constraints alone, and whether the column is never NULL."""
    col = schema.column(table, column)
    integer = col.type == "integer"
    iv = Interval(integer=integer)
    present = not col.nullable
    for c in cs.on_column(table, column):
        k = c.kind
        if isinstance(k, Presence):
            present = True
        elif isinstance(k, Inclusion):
            iv = iv.with_values(k.values)
        elif isinstance(k, Numerical) and col.type in NUMERIC_TYPES:
            if k.unsatisfiable:
                iv = iv.with_values(())
                continue
            if k.lower is not None:
                iv = iv.with_lower(k.lower)
            if k.upper is not None:
                iv = iv.with_upper(k.upper)
            if k.equal is not None:
                iv = iv.with_lower(Bound(k.equal, True)).with_upper(Bound(k.equal, True))
    if col.type == "enum":
        iv = iv.with_values(col.enum_values)
    if col.type == "boolean":
        iv = iv.with_values((False, True))
    return iv, present


def analyse_conjunction(
    atoms: Iterable[Expr],
    schema: Schema,
    cs: ConstraintSet,
    columns: Iterable[tuple[str, str]] = (),
    use_constraints: bool = True,
) -> BranchFacts:
    atoms = list(atoms)
    uf = _UnionFind()
    facts = BranchFacts(False, uf=uf)
    needs_value: set[Term] = set()
    needs_null: set[Term] = set()
    atom_ivs: list[tuple[Term, Interval]] = []
    referenced: set[tuple[str, str]] = set(columns)

    def note(c: ColumnRef) -> Term:
        referenced.add((c.table, c.column))
        t = _col_term(c)
        uf.find(t)
        return t

    for a in atoms:
        if isinstance(a, Const):
            if not a.value:
                facts.empty = True
        elif isinstance(a, Compare) and isinstance(a.left, ColumnRef):
            lt = note(a.left)
            needs_value.add(lt)
            r = a.right
            integer = schema.column(a.left.table, a.left.column).type == "integer"
            if isinstance(r, ColumnRef):
                rt = note(r)
                needs_value.add(rt)
                if a.op == "=":
                    uf.union(lt, rt)
            elif isinstance(r, Param):
                if a.op == "=":
                    uf.union(lt, ("param", r.index))
            elif isinstance(r, Lit):
                if r.value is None:
                    facts.empty = True
                else:
                    atom_ivs.append((lt, atom_interval(a.op, r.value, integer)))
        elif isinstance(a, InList):
            t = note(a.col)
            needs_value.add(t)
            lits = [i.value for i in a.items if isinstance(i, Lit)]
            if len(lits) == len(a.items):
                atom_ivs.append((t, Interval(not_null=True).with_values(v for v in lits if v is not None)))
        elif isinstance(a, IsNull):
            t = note(a.col)
            (needs_value if a.negated else needs_null).add(t)
        # anything else is opaque: it can only shrink the branch, never grow it

    for key in sorted(referenced):
        iv, present = column_fact(schema, cs, *key) if use_constraints else (Interval(integer=schema.column(*key).type == "integer"), not schema.column(*key).nullable)
        facts.column_facts[key] = replace(iv, not_null=present)
        root = uf.find(("col",) + key)
        cur = facts.classes.get(root, Interval())
        facts.classes[root] = cur.meet(replace(iv, not_null=present))
    for t, iv in atom_ivs:
        root = uf.find(t)
        facts.classes[root] = facts.classes.get(root, Interval()).meet(iv)
    for t in needs_value:
        root = uf.find(t)
        facts.classes[root] = replace(facts.classes.get(root, Interval()), not_null=True)

    if not facts.empty:
        for root, iv in facts.classes.items():
            if iv.not_null and iv.is_empty:
                facts.empty = True
                break
    if not facts.empty:
        for t in needs_null:
            root = uf.find(t)
            if facts.classes.get(root, Interval()).not_null or facts.column_facts[t[1:]].not_null:
                facts.empty = True
                break
    return facts


def derive_intervals(q: Query, schema: Schema, cs: ConstraintSet) -> list[BranchFacts]:
    """Facts for each DNF branch of the WHERE clause, join conditions included."""
    on_atoms = [j.on for j in q.joins if j.kind == "INNER"]
    cols = filter_columns(q)
    return [analyse_conjunction(on_atoms + branch, schema, cs, cols) for branch in to_dnf(q.where)]


def base_facts(q: Query, schema: Schema, cs: ConstraintSet) -> BranchFacts:
    """Facts that hold for every joined row regardless of the WHERE clause."""
    return analyse_conjunction([j.on for j in q.joins if j.kind == "INNER"], schema, cs, filter_columns(q))

