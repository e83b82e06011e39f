"""Data constraints, constraint sets, cross-application merging and the
checker-SQL emitter.

Semantics shared by every consumer (checker, generator, verifier): all kinds
except Presence are vacuous on NULL, and Uniqueness compares NULL as an
ordinary value (matching ``GROUP BY`` in the checker).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence, Union

from .regex import Uncheckable, ruby_to_postgres, ruby_to_python
from .schema import Schema

Literal = Union[str, int, float, bool]

SOURCES = (
    "builtin-validation",
    "custom-validation",
    "inheritance",
    "polymorphic",
    "has-one",
    "state-machine",
    "db-declared",
    "merged",
)
KIND_ORDER = ("inclusion", "presence", "uniqueness", "length", "format", "numerical", "foreign_key")


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class Bound:
    value: float | int | str
    inclusive: bool

    def to_dict(self) -> dict:
        return {"inclusive": self.inclusive, "value": self.value}


@dataclass(frozen=True)
class Inclusion:
    values: tuple[Literal, ...]
    name = "inclusion"

    def __post_init__(self) -> None:
        if len(set(map(_lit_key, self.values))) != len(self.values):
            raise ConstraintError("inclusion values must be duplicate-free")

    @property
    def unsatisfiable(self) -> bool:
        return not self.values

    def params(self) -> dict:
        d: dict[str, Any] = {"values": list(self.values)}
        if self.unsatisfiable:
            d["unsatisfiable"] = True
        return d


@dataclass(frozen=True)
class Presence:
    name = "presence"
    unsatisfiable = False

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class Condition:
    """``column op value`` qualifier of a conditional uniqueness."""

    column: str
    op: str
    value: Literal

    def to_dict(self) -> dict:
        return {"column": self.column, "op": self.op, "value": self.value}


@dataclass(frozen=True)
class Uniqueness:
    condition: Condition | None = None
    name = "uniqueness"
    unsatisfiable = False

    def params(self) -> dict:
        return {"condition": self.condition.to_dict() if self.condition else None}


@dataclass(frozen=True)
class Length:
    min: int | None = None
    max: int | None = None
    name = "length"

    @property
    def unsatisfiable(self) -> bool:
        return self.min is not None and self.max is not None and self.min > self.max

    def admits(self, n: int) -> bool:
        return (self.min is None or n >= self.min) and (self.max is None or n <= self.max)

    def params(self) -> dict:
        d: dict[str, Any] = {"max": self.max, "min": self.min}
        if self.unsatisfiable:
            d["unsatisfiable"] = True
        return d


@dataclass(frozen=True)
class Pattern:
    source: str
    flags: str = ""

    def compiled(self) -> re.Pattern[str]:
        return ruby_to_python(self.source, self.flags)

    @property
    def checkable(self) -> bool:
        try:
            self.compiled()
        except Uncheckable:
            return False
        return True

    def to_dict(self) -> dict:
        return {"flags": self.flags, "source": self.source}


@dataclass(frozen=True)
class Format:
    patterns: tuple[Pattern, ...]
    name = "format"
    unsatisfiable = False

    def matches(self, text: str) -> bool:
        # patterns with no Python translation are not enforced
        return all(p.compiled().search(text) for p in self.checkable_patterns)

    @property
    def checkable_patterns(self) -> tuple[Pattern, ...]:
        return tuple(p for p in self.patterns if p.checkable)

    def params(self) -> dict:
        return {"patterns": [p.to_dict() for p in self.patterns]}


@dataclass(frozen=True)
class Numerical:
    lower: Bound | None = None
    upper: Bound | None = None
    equal: float | int | None = None
    empty: bool = False
    name = "numerical"

    @property
    def unsatisfiable(self) -> bool:
        if self.empty:
            return True
        lo, hi = self.lower, self.upper
        if self.equal is not None:
            return not self.admits(self.equal)
        if lo is not None and hi is not None:
            if lo.value > hi.value:
                return True
            if lo.value == hi.value and not (lo.inclusive and hi.inclusive):
                return True
        return False

    def admits(self, v) -> bool:
        if self.empty:
            return False
        if self.equal is not None and v != self.equal:
            return False
        if self.lower is not None:
            if v < self.lower.value or (v == self.lower.value and not self.lower.inclusive):
                return False
        if self.upper is not None:
            if v > self.upper.value or (v == self.upper.value and not self.upper.inclusive):
                return False
        return True

    def params(self) -> dict:
        d: dict[str, Any] = {
            "equal": self.equal,
            "lower": self.lower.to_dict() if self.lower else None,
            "upper": self.upper.to_dict() if self.upper else None,
        }
        if self.unsatisfiable:
            d["unsatisfiable"] = True
        return d


@dataclass(frozen=True)
class ForeignKey:
    ref_table: str
    ref_column: str
    name = "foreign_key"
    unsatisfiable = False

    def params(self) -> dict:
        return {"ref_column": self.ref_column, "ref_table": self.ref_table}


Kind = Union[Inclusion, Presence, Uniqueness, Length, Format, Numerical, ForeignKey]


@dataclass(frozen=True)
class Constraint:
    table: str
    columns: tuple[str, ...]
    kind: Kind
    source: str = "builtin-validation"
    # model file and line the constraint was extracted from, if any
    origin: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.columns:
            raise ConstraintError("constraint needs at least one column")
        if len(set(self.columns)) != len(self.columns):
            raise ConstraintError(f"duplicate columns in {self.columns}")
        if self.source not in SOURCES:
            raise ConstraintError(f"unknown source {self.source!r}")
        if not isinstance(self.kind, Uniqueness) and len(self.columns) != 1:
            raise ConstraintError(f"{self.kind.name} constraints target a single column")

    @property
    def column(self) -> str:
        return self.columns[0]

    @property
    def key(self) -> tuple:
        """(target, kind-discriminator) used for deduplication and merging."""
        extra: tuple = ()
        if isinstance(self.kind, Uniqueness):
            extra = (self.kind.condition,)
        elif isinstance(self.kind, ForeignKey):
            extra = (self.kind.ref_table, self.kind.ref_column)
        return (self.table, self.columns, self.kind.name) + extra

    @property
    def conditional(self) -> bool:
        return isinstance(self.kind, Uniqueness) and self.kind.condition is not None

    def sort_key(self) -> tuple:
        return (
            self.table,
            self.columns,
            KIND_ORDER.index(self.kind.name),
            json.dumps(self.kind.params(), sort_keys=True, default=str),
            self.source,
        )

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "kind": self.kind.name,
            "params": self.kind.params(),
            "source": self.source,
            "table": self.table,
        }

    def describe(self) -> str:
        target = f"{self.table}({', '.join(self.columns)})"
        return f"{self.kind.name} {target} {json.dumps(self.kind.params(), sort_keys=True)}"


def _lit_key(v: Any) -> tuple:
    return (type(v).__name__, v)


def sort_literals(values: Iterable[Literal]) -> list[Literal]:
    return sorted(values, key=lambda v: (type(v).__name__, str(v) if isinstance(v, str) else v))


# -- serialisation ----------------------------------------------------------


def _bound(d: Mapping | None) -> Bound | None:
    return None if d is None else Bound(d["value"], bool(d["inclusive"]))


def kind_from_dict(name: str, params: Mapping[str, Any]) -> Kind:
    if name == "inclusion":
        return Inclusion(tuple(params.get("values", ())))
    if name == "presence":
        return Presence()
    if name == "uniqueness":
        cond = params.get("condition")
        return Uniqueness(Condition(cond["column"], cond["op"], cond["value"]) if cond else None)
    if name == "length":
        return Length(params.get("min"), params.get("max"))
    if name == "format":
        return Format(tuple(Pattern(p["source"], p.get("flags", "")) for p in params["patterns"]))
    if name == "numerical":
        return Numerical(
            _bound(params.get("lower")),
            _bound(params.get("upper")),
            params.get("equal"),
            empty=bool(params.get("unsatisfiable", False)) and params.get("equal") is None
            and params.get("lower") is None and params.get("upper") is None,
        )
    if name == "foreign_key":
        return ForeignKey(params["ref_table"], params["ref_column"])
    raise ConstraintError(f"unknown constraint kind {name!r}")


def constraint_from_dict(d: Mapping[str, Any], source: str | None = None) -> Constraint:
    return Constraint(
        table=d["table"],
        columns=tuple(d["columns"]),
        kind=kind_from_dict(d["kind"], d.get("params", {})),
        source=source or d.get("source", "db-declared"),
    )


# -- constraint sets --------------------------------------------------------


class ConstraintSet:
    """Immutable, deterministically ordered collection of constraints.

    Exact duplicates (same key and parameters) collapse to one entry; the
    entry with the lexicographically smallest source wins.
    """

    __slots__ = ("_items", "_by_table")

    def __init__(self, constraints: Iterable[Constraint] = ()) -> None:
        best: dict[tuple, Constraint] = {}
        for c in constraints:
            ident = c.key + (json.dumps(c.kind.params(), sort_keys=True, default=str),)
            cur = best.get(ident)
            if cur is None or c.source < cur.source:
                best[ident] = c
        self._items = tuple(sorted(best.values(), key=Constraint.sort_key))
        by_table: dict[str, list[Constraint]] = {}
        for c in self._items:
            by_table.setdefault(c.table, []).append(c)
        self._by_table = {k: tuple(v) for k, v in by_table.items()}

    def __iter__(self) -> Iterator[Constraint]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConstraintSet) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"ConstraintSet({len(self._items)} constraints)"

    def __or__(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(list(self) + list(other))

    @property
    def constraints(self) -> tuple[Constraint, ...]:
        return self._items

    def on_table(self, table: str) -> tuple[Constraint, ...]:
        return self._by_table.get(table, ())

    def on_column(self, table: str, column: str) -> list[Constraint]:
        return [c for c in self.on_table(table) if column in c.columns]

    def of_kind(self, kind: type) -> list[Constraint]:
        return [c for c in self._items if isinstance(c.kind, kind)]

    def to_dicts(self) -> list[dict]:
        return [c.to_dict() for c in self._items]

    def to_json(self) -> str:
        return dumps_canonical(self.to_dicts())


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def load_constraints(path: str | Path) -> ConstraintSet:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return ConstraintSet(constraint_from_dict(d) for d in data)


def write_constraints(cs: ConstraintSet, path: str | Path) -> None:
    Path(path).write_text(cs.to_json(), encoding="utf-8")


def schema_constraints(schema: Schema) -> ConstraintSet:
    """Constraints the database itself already enforces."""
    out: list[Constraint] = []
    for t in schema.tables:
        for c in t.columns:
            if c.is_primary_key:
                out.append(Constraint(t.name, (c.name,), Uniqueness(), "db-declared"))
            if c.is_primary_key or not c.nullable:
                out.append(Constraint(t.name, (c.name,), Presence(), "db-declared"))
            if c.type == "enum":
                out.append(Constraint(t.name, (c.name,), Inclusion(c.enum_values), "db-declared"))
    out.extend(constraint_from_dict(d, "db-declared") for d in schema.declared)
    return ConstraintSet(out)


# -- merging ----------------------------------------------------------------


def _tighter_lower(a: Bound | None, b: Bound | None) -> Bound | None:
    if a is None:
        return b
    if b is None:
        return a
    if a.value != b.value:
        return a if a.value > b.value else b
    return Bound(a.value, a.inclusive and b.inclusive)


def _tighter_upper(a: Bound | None, b: Bound | None) -> Bound | None:
    if a is None:
        return b
    if b is None:
        return a
    if a.value != b.value:
        return a if a.value < b.value else b
    return Bound(a.value, a.inclusive and b.inclusive)


def _intersect(kinds: Sequence[Kind]) -> Kind:
    first = kinds[0]
    if isinstance(first, Inclusion):
        common = {_lit_key(v) for v in first.values}
        for k in kinds[1:]:
            common &= {_lit_key(v) for v in k.values}
        return Inclusion(tuple(sort_literals(v for t, v in common)))
    if isinstance(first, Length):
        mins = [k.min for k in kinds if k.min is not None]
        maxs = [k.max for k in kinds if k.max is not None]
        return Length(max(mins) if mins else None, min(maxs) if maxs else None)
    if isinstance(first, Numerical):
        lo = hi = None
        equals = set()
        empty = False
        for k in kinds:
            lo = _tighter_lower(lo, k.lower)
            hi = _tighter_upper(hi, k.upper)
            empty = empty or k.empty
            if k.equal is not None:
                equals.add(k.equal)
        if len(equals) > 1:
            return Numerical(lo, hi, None, empty=True)
        return Numerical(lo, hi, equals.pop() if equals else None, empty=empty)
    if isinstance(first, Format):
        pats = {p for k in kinds for p in k.patterns}
        return Format(tuple(sorted(pats, key=lambda p: (p.source, p.flags))))
    return first


def normalize(cs: ConstraintSet, source: str = "merged") -> ConstraintSet:
    """Collapse several constraints on one (target, kind) into their conjunction."""
    groups: dict[tuple, list[Constraint]] = {}
    for c in cs:
        groups.setdefault(c.key, []).append(c)
    out = []
    for items in groups.values():
        if len(items) == 1:
            out.append(items[0])
        else:
            out.append(replace(items[0], kind=_intersect([c.kind for c in items]), source=source))
    return ConstraintSet(out)


_UNANIMOUS = ("presence", "uniqueness", "foreign_key")


def merge_constraint_sets(sets: Sequence[ConstraintSet]) -> ConstraintSet:
    """Combine per-application constraint sets into one that holds for all of them.

    Inclusion, Length, Numerical and Format constraints on the same target are
    intersected; Presence, Uniqueness and ForeignKey survive only when every
    input set has them.
    """
    if not sets:
        raise ConstraintError("merge needs at least one constraint set")
    if len(sets) == 1:
        return sets[0]
    per_set = [{c.key: c for c in normalize(s)} for s in sets]
    keys = sorted({k for m in per_set for k in m}, key=repr)
    out = []
    for key in keys:
        present = [m[key] for m in per_set if key in m]
        kind_name = key[2]
        if kind_name in _UNANIMOUS:
            if len(present) == len(per_set):
                out.append(replace(present[0], source="merged"))
            continue
        kind = _intersect([c.kind for c in present])
        out.append(replace(present[0], kind=kind, source="merged"))
    return ConstraintSet(out)


# -- schema resolution ------------------------------------------------------


@dataclass(frozen=True)
class ResolutionError:
    constraint: Constraint | None
    problem: str  # unresolved-table | unresolved-column
    table: str
    column: str | None = None

    def __str__(self) -> str:
        if self.problem == "unresolved-table":
            return f"unresolved-table({self.table})"
        return f"unresolved-column({self.table}.{self.column})"


def validate_against_schema(cs: Iterable[Constraint], schema: Schema) -> list[ResolutionError]:
    errors: list[ResolutionError] = []
    for c in cs:
        refs = [(c.table, col) for col in c.columns]
        if isinstance(c.kind, ForeignKey):
            refs.append((c.kind.ref_table, c.kind.ref_column))
        if isinstance(c.kind, Uniqueness) and c.kind.condition is not None:
            refs.append((c.table, c.kind.condition.column))
        for table, col in refs:
            if not schema.has_table(table):
                err = ResolutionError(c, "unresolved-table", table)
            elif not schema.table(table).has_column(col):
                err = ResolutionError(c, "unresolved-column", table, col)
            else:
                continue
            if err not in errors:
                errors.append(err)
    return errors


# -- brute-force satisfaction (reference semantics) --------------------------

_CMP = {
    "=": lambda a, b: a == b,
    "==": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def value_admitted(kind: Kind, value: Any) -> bool:
    """Single-value check for the column-local kinds (NULL handling included)."""
    if isinstance(kind, Presence):
        return value is not None
    if value is None:
        return True
    if isinstance(kind, Inclusion):
        return _lit_key(value) in {_lit_key(v) for v in kind.values} or (
            not isinstance(value, bool) and isinstance(value, (int, float))
            and any(type(v) in (int, float) and v == value for v in kind.values)
        )
    if isinstance(kind, Length):
        return kind.admits(len(str(value)))
    if isinstance(kind, Format):
        return kind.matches(str(value))
    if isinstance(kind, Numerical):
        try:
            return kind.admits(value)
        except TypeError:
            return False
    return True


def holds(c: Constraint, tables: Mapping[str, Sequence[Mapping[str, Any]]]) -> bool:
    """Evaluate ``c`` directly on rows given as ``{table: [row dict, ...]}``."""
    rows = tables.get(c.table, ())
    kind = c.kind
    if isinstance(kind, Uniqueness):
        seen = set()
        for r in rows:
            cond = kind.condition
            if cond is not None:
                v = r.get(cond.column)
                if v is None or not _CMP[cond.op](v, cond.value):
                    continue
            key = tuple(_lit_key(r.get(col)) for col in c.columns)
            if key in seen:
                return False
            seen.add(key)
        return True
    if isinstance(kind, ForeignKey):
        targets = {_lit_key(r.get(kind.ref_column)) for r in tables.get(kind.ref_table, ())}
        return all(r.get(c.column) is None or _lit_key(r.get(c.column)) in targets for r in rows)
    return all(value_admitted(kind, r.get(c.column)) for r in rows)


def all_hold(cs: Iterable[Constraint], tables: Mapping[str, Sequence[Mapping[str, Any]]]) -> bool:
    return all(holds(c, tables) for c in cs)


# -- checker SQL ------------------------------------------------------------


def sql_literal(v: Any) -> str:
    if v is None:
        return "NULL"
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, (int, float)):
        return repr(v)
    return "'" + str(v).replace("'", "''") + "'"


def _range_sql(expr: str, lower: Bound | None, upper: Bound | None) -> list[str]:
    parts = []
    if lower is not None:
        parts.append(f"{expr} {'>=' if lower.inclusive else '>'} {sql_literal(lower.value)}")
    if upper is not None:
        parts.append(f"{expr} {'<=' if upper.inclusive else '<'} {sql_literal(upper.value)}")
    return parts


def checker_statement(c: Constraint) -> str:
    """The violation query for ``c``; a ``--`` comment when it cannot be expressed."""
    t, col, kind = c.table, c.column, c.kind
    if isinstance(kind, Presence):
        return f"SELECT * FROM {t} WHERE {col} IS NULL;"
    if isinstance(kind, Uniqueness):
        cols = ", ".join(c.columns)
        where = ""
        if kind.condition is not None:
            cond = kind.condition
            op = "=" if cond.op == "==" else cond.op
            where = f" WHERE {cond.column} {op} {sql_literal(cond.value)}"
        return f"SELECT {cols} FROM {t}{where} GROUP BY {cols} HAVING COUNT(*) > 1;"
    if isinstance(kind, Inclusion):
        if kind.unsatisfiable:
            return f"SELECT * FROM {t} WHERE {col} IS NOT NULL;"
        values = ", ".join(sql_literal(v) for v in kind.values)
        return f"SELECT * FROM {t} WHERE NOT ({col} IN ({values}));"
    if isinstance(kind, Length):
        if kind.unsatisfiable:
            return f"SELECT * FROM {t} WHERE {col} IS NOT NULL;"
        parts = _range_sql(f"char_length({col})", _bound_of(kind.min), _bound_of(kind.max))
        if not parts:
            return f"SELECT * FROM {t} WHERE FALSE;"
        return f"SELECT * FROM {t} WHERE NOT ({' AND '.join(parts)});"
    if isinstance(kind, Numerical):
        if kind.unsatisfiable:
            return f"SELECT * FROM {t} WHERE {col} IS NOT NULL;"
        parts = _range_sql(col, kind.lower, kind.upper)
        if kind.equal is not None:
            parts.append(f"{col} = {sql_literal(kind.equal)}")
        if not parts:
            return f"SELECT * FROM {t} WHERE FALSE;"
        return f"SELECT * FROM {t} WHERE NOT ({' AND '.join(parts)});"
    if isinstance(kind, Format):
        parts = []
        for p in kind.patterns:
            try:
                are, ci = ruby_to_postgres(p.source, p.flags)
            except Uncheckable as exc:
                return f"-- UNCHECKABLE {t}.{col} format /{p.source}/{p.flags}: {exc}"
            parts.append(f"{col} {'~*' if ci else '~'} {sql_literal(are)}")
        return f"SELECT * FROM {t} WHERE NOT ({' AND '.join(parts)});"
    if isinstance(kind, ForeignKey):
        rt, rc = kind.ref_table, kind.ref_column
        return (
            f"SELECT {t}.* FROM {t} LEFT JOIN {rt} ON {t}.{col} = {rt}.{rc} "
            f"WHERE {t}.{col} IS NOT NULL AND {rt}.{rc} IS NULL;"
        )
    raise ConstraintError(f"no checker for {kind!r}")


def _bound_of(n: int | None) -> Bound | None:
    return None if n is None else Bound(n, True)


def emit_checker_sql(cs: Iterable[Constraint], schema: Schema | None = None) -> list[str]:
    """One violation query per constraint, ordered by table, column, kind."""
    items = list(cs)
    if schema is not None:
        errors = validate_against_schema(items, schema)
        if errors:
            raise ConstraintError("; ".join(str(e) for e in errors))
    items.sort(key=Constraint.sort_key)
    return [checker_statement(c) for c in items]
