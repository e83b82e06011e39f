"""The six constraint-driven rewrite rules.

Every ``apply_*`` function takes a resolved query and returns the list of
rewritten queries (possibly empty). Rules are deliberately permissive:
candidates are later filtered by cost, by testing and by verification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..constraints import ConstraintSet, ForeignKey, Presence, Uniqueness
from ..schema import NUMERIC_TYPES, Schema
from ..sqlir.ir import (
    FALSE,
    TRUE,
    And,
    ColumnRef,
    Compare,
    Expr,
    InList,
    IsNull,
    Lit,
    Not,
    Or,
    Query,
    Star,
    conjuncts,
    make_and,
    simplify,
)
from ..sqlir.template import filter_columns
from .intervals import (
    Interval,
    TooManyBranches,
    atom_interval,
    base_facts,
    column_fact,
    derive_intervals,
)

RULE_ORDER = ("RD", "AL", "PE", "PI", "JE", "ES")
RULE_NAMES = {
    "RD": "RemoveDistinct",
    "AL": "AddLimitOne",
    "PE": "PredicateElimination",
    "PI": "PredicateIntroduction",
    "JE": "JoinElimination",
    "ES": "EmptySetDetection",
}
MAX_INTRODUCED_ATOMS = 3


def _has_left_join(q: Query) -> bool:
    return any(j.kind != "INNER" for j in q.joins)


# -- DISTINCT / LIMIT ----------------------------------------------------------


def apply_remove_distinct(q: Query) -> list[Query]:
    return [q.with_(distinct=False)] if q.distinct else []


def apply_add_limit_one(q: Query) -> list[Query]:
    return [q.with_(limit=1)] if q.limit is None else []


# -- predicate elimination -------------------------------------------------------


def _leaves(e: Expr | None, path=()):
    if e is None:
        return
    if isinstance(e, (And, Or)):
        for i, item in enumerate(e.items):
            yield from _leaves(item, path + (i,))
    elif isinstance(e, Not):
        return  # negated subtrees are opaque
    else:
        yield path, e


def _replace_at(e: Expr, path: tuple[int, ...], new: Expr) -> Expr:
    if not path:
        return new
    items = list(e.items)
    items[path[0]] = _replace_at(items[path[0]], path[1:], new)
    return type(e)(tuple(items))


def _implied(atom: Expr, facts, schema: Schema) -> bool:
    """``atom`` holds on every joined row whose referenced columns are non-NULL."""
    if isinstance(atom, Compare) and isinstance(atom.left, ColumnRef):
        iv = facts.interval(atom.left.table, atom.left.column)
        r = atom.right
        if isinstance(r, ColumnRef):
            return atom.op in ("=", "<=", ">=") and facts.same_class(atom.left, r)
        if isinstance(r, Lit) and r.value is not None:
            return not iv.is_empty and iv.entails(atom.op, r.value)
        return False
    if isinstance(atom, InList):
        lits = [i.value for i in atom.items if isinstance(i, Lit)]
        if len(lits) != len(atom.items):
            return False
        fv = facts.interval(atom.col.table, atom.col.column).finite_values()
        return bool(fv) and set(fv) <= set(lits)
    if isinstance(atom, IsNull) and atom.negated:
        return facts.interval(atom.col.table, atom.col.column).not_null
    return False


def apply_predicate_elimination(q: Query, schema: Schema, cs: ConstraintSet) -> list[Query]:
    if q.where is None or _has_left_join(q):
        return []
    facts = base_facts(q, schema, cs)
    removable = [path for path, atom in _leaves(q.where) if atom not in (TRUE, FALSE) and _implied(atom, facts, schema)]
    out = []
    for path in removable:
        out.append(q.with_(where=simplify(_replace_at(q.where, path, TRUE))))
    if len(removable) > 1:
        w = q.where
        for path in removable:
            w = _replace_at(w, path, TRUE)
        out.append(q.with_(where=simplify(w)))
    return out


# -- predicate introduction ------------------------------------------------------


def _own_interval(q: Query, schema: Schema, cs: ConstraintSet, table: str, column: str) -> Interval:
    iv, _ = column_fact(schema, cs, table, column)
    integer = schema.column(table, column).type == "integer"
    for c in conjuncts(q.where):
        if (
            isinstance(c, Compare)
            and c.left == ColumnRef(table, column)
            and isinstance(c.right, Lit)
            and c.right.value is not None
        ):
            iv = iv.meet(atom_interval(c.op, c.right.value, integer))
    return iv


def _bound_atoms(col: ColumnRef, derived: Interval, existing: Interval) -> list[Compare]:
    atoms = []
    if derived.tighter_lower_than(existing):
        b = derived.lower
        atoms.append(Compare(col, ">=" if b.inclusive else ">", Lit(b.value)))
    if derived.tighter_upper_than(existing):
        b = derived.upper
        atoms.append(Compare(col, "<=" if b.inclusive else "<", Lit(b.value)))
    return atoms


def apply_predicate_introduction(q: Query, schema: Schema, cs: ConstraintSet) -> list[Query]:
    if _has_left_join(q):
        return []
    try:
        branches = derive_intervals(q, schema, cs)
    except TooManyBranches:
        return []
    live = [b for b in branches if not b.empty]
    if not live:
        return []
    columns = sorted(
        {
            key
            for b in live
            for root in b.classes
            for key in [root[1:]]
            if root[0] == "col"
        }
        | {k for b in live for k in b.column_facts}
    )
    present = set(conjuncts(q.where))
    per_column: list[list[Compare]] = []
    for table, column in columns:
        if schema.column(table, column).type not in NUMERIC_TYPES:
            continue
        ivs = [b.interval(table, column) for b in live]
        if not all(iv.not_null for iv in ivs):
            continue
        derived = ivs[0]
        for iv in ivs[1:]:
            derived = derived.hull(iv)
        existing = _own_interval(q, schema, cs, table, column)
        atoms = [a for a in _bound_atoms(ColumnRef(table, column), derived, existing) if a not in present]
        if atoms:
            per_column.append(atoms)
    out = [q.with_(where=make_and([q.where, *atoms])) for atoms in per_column]
    if len(per_column) > 1:
        combined = [a for atoms in per_column for a in atoms][:MAX_INTRODUCED_ATOMS]
        out.append(q.with_(where=make_and([q.where, *combined])))
    return out


# -- join elimination ------------------------------------------------------------


def _is_unique(schema: Schema, cs: ConstraintSet, table: str, column: str) -> bool:
    if schema.column(table, column).is_primary_key:
        return True
    return any(
        c.columns == (column,) and not c.conditional
        for c in cs.on_table(table)
        if isinstance(c.kind, Uniqueness)
    )


def _uses_table(q: Query, table: str, skip_join: int) -> bool:
    for p in q.projections:
        if isinstance(p, Star) and (p.table is None or p.table == table):
            return True
        if isinstance(p, ColumnRef) and p.table == table:
            return True
    others = q.with_(joins=tuple(j for i, j in enumerate(q.joins) if i != skip_join))
    return any(t == table for t, _ in filter_columns(others))


def apply_join_elimination(q: Query, schema: Schema, cs: ConstraintSet) -> list[Query]:
    if _has_left_join(q):
        return []
    out = []
    for idx, j in enumerate(q.joins):
        a, b = j.on.left, j.on.right
        for fk_side, pk_side in ((a, b), (b, a)):
            if not isinstance(pk_side, ColumnRef) or fk_side.table == pk_side.table:
                continue
            dropped = pk_side.table
            fk_ok = any(
                isinstance(c.kind, ForeignKey)
                and c.kind.ref_table == dropped
                and c.kind.ref_column == pk_side.column
                for c in cs.on_column(fk_side.table, fk_side.column)
            )
            present = not schema.column(fk_side.table, fk_side.column).nullable or any(
                isinstance(c.kind, Presence) for c in cs.on_column(fk_side.table, fk_side.column)
            )
            if not (fk_ok and present and _is_unique(schema, cs, dropped, pk_side.column)):
                continue
            if _uses_table(q, dropped, idx):
                continue
            rebuilt = _drop_table(q, dropped, idx)
            if rebuilt is not None:
                out.append(rebuilt)
    return out


def _drop_table(q: Query, table: str, join_idx: int) -> Query | None:
    remaining = [j for i, j in enumerate(q.joins) if i != join_idx]
    if table == q.from_table:
        if not remaining:
            return None
        from_table = remaining[0].table
        if q.joins[join_idx].table != from_table:
            return None
        remaining = remaining[1:]
    elif q.joins[join_idx].table != table:
        return None
    else:
        from_table = q.from_table
    seen = {from_table}
    for j in remaining:
        refs = {j.on.left.table, j.on.right.table}
        if j.table not in refs or not (refs - {j.table}) <= seen:
            return None
        seen.add(j.table)
    return q.with_(from_table=from_table, joins=tuple(remaining))


# -- empty-set detection ---------------------------------------------------------


def apply_empty_set_detection(q: Query, schema: Schema, cs: ConstraintSet) -> list[Query]:
    if q.where == FALSE or _has_left_join(q):
        return []
    try:
        branches = derive_intervals(q, schema, cs)
    except TooManyBranches:
        return []
    if all(b.empty for b in branches):
        return [q.with_(where=FALSE)]
    return []


@dataclass(frozen=True)
class RuleImpl:
    code: str
    apply: Callable[[Query, Schema, ConstraintSet], list[Query]]


RULES = {
    "RD": RuleImpl("RD", lambda q, s, cs: apply_remove_distinct(q)),
    "AL": RuleImpl("AL", lambda q, s, cs: apply_add_limit_one(q)),
    "PE": RuleImpl("PE", apply_predicate_elimination),
    "PI": RuleImpl("PI", apply_predicate_introduction),
    "JE": RuleImpl("JE", apply_join_elimination),
    "ES": RuleImpl("ES", apply_empty_set_detection),
}
