"""Resolution, used-field extraction, fingerprints, instantiation and
query-log records."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Any, Sequence

from ..schema import Schema
from .ir import (
    And,
    CharLength,
    ColumnRef,
    Compare,
    CountStar,
    InList,
    Join,
    Lit,
    Not,
    Or,
    OrderItem,
    Param,
    Query,
    Star,
    atom_columns,
    map_columns,
    map_operands,
    params_of,
    query_atoms,
)
from .parser import UnsupportedQuery, parse_query
from .render import render


class ResolutionError(ValueError):
    pass


class ArityError(ValueError):
    pass


# -- resolution --------------------------------------------------------------


def coerce_literal(value: Any, col_type: str) -> Any:
    """Convert a literal to the Python representation of ``col_type``."""
    if value is None:
        return None
    if col_type == "integer":
        if isinstance(value, bool):
            return int(value)
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        return value
    if col_type == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return value
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        return value
    if col_type == "boolean":
        if isinstance(value, str) and value.lower() in ("t", "true", "f", "false"):
            return value.lower() in ("t", "true")
        return value
    if col_type in ("text", "enum", "timestamp"):
        if isinstance(value, bool):
            return value
        return value if isinstance(value, str) else str(value)
    return value


def resolve(q: Query, schema: Schema) -> Query:
    """Qualify column references, coerce literals, infer parameter types."""
    tables = q.tables
    for t in tables:
        if not schema.has_table(t):
            raise ResolutionError(f"unknown table {t}")
    if len(set(tables)) != len(tables):
        raise UnsupportedQuery(0, "self join")

    def qualify(c: ColumnRef) -> ColumnRef:
        if c.table is not None:
            if c.table not in tables:
                raise ResolutionError(f"table {c.table} not in FROM clause")
            if not schema.has_column(c.table, c.column):
                raise ResolutionError(f"unknown column {c.table}.{c.column}")
            return c
        owners = [t for t in tables if schema.has_column(t, c.column)]
        if not owners:
            raise ResolutionError(f"unknown column {c.column}")
        if len(owners) > 1:
            raise ResolutionError(f"ambiguous column {c.column}")
        return ColumnRef(owners[0], c.column)

    def ctype(c: ColumnRef) -> str:
        return schema.column(c.table, c.column).type

    projections = []
    for p in q.projections:
        if isinstance(p, Star):
            if p.table is not None and p.table not in tables:
                raise ResolutionError(f"table {p.table} not in FROM clause")
            projections.append(p)
        elif isinstance(p, CountStar):
            projections.append(p)
        else:
            projections.append(qualify(p))

    joins = tuple(Join(j.table, map_columns(j.on, qualify), j.kind) for j in q.joins)
    where = map_columns(q.where, qualify)
    ptypes: dict[int, str] = {}

    def coerce_in(e):
        if e is None:
            return None
        if isinstance(e, (And, Or)):
            return type(e)(tuple(coerce_in(i) for i in e.items))
        if isinstance(e, Not):
            return Not(coerce_in(e.item))
        if isinstance(e, Compare):
            if isinstance(e.left, CharLength):
                typ = "integer"
            else:
                typ = ctype(e.left)
            right = e.right
            if isinstance(right, Lit):
                right = Lit(coerce_literal(right.value, typ))
            elif isinstance(right, Param):
                ptypes.setdefault(right.index, typ)
            return Compare(e.left, e.op, right)
        if isinstance(e, InList):
            typ = ctype(e.col)
            items = []
            for it in e.items:
                if isinstance(it, Lit):
                    items.append(Lit(coerce_literal(it.value, typ)))
                else:
                    ptypes.setdefault(it.index, typ)
                    items.append(it)
            return InList(e.col, tuple(items))
        return e

    where = coerce_in(where)
    group_by = tuple(qualify(c) for c in q.group_by)
    order_by = tuple(OrderItem(qualify(o.col), o.descending) for o in q.order_by)
    out = replace(
        q,
        projections=tuple(projections),
        joins=joins,
        where=where,
        group_by=group_by,
        order_by=order_by,
        param_types=tuple(sorted(ptypes.items())),
    )
    ordinals = sorted(set(params_of(out)))
    if ordinals and ordinals != list(range(1, len(ordinals) + 1)):
        raise ResolutionError(f"parameter ordinals not dense: {ordinals}")
    if q.is_aggregate:
        grouped = set(group_by)
        for p in projections:
            if isinstance(p, Star) or (isinstance(p, ColumnRef) and p not in grouped):
                raise UnsupportedQuery(0, "non-grouped projection in aggregate query")
    return out


def parse_template(sql: str, schema: Schema | None = None) -> Query:
    q = parse_query(sql)
    return resolve(q, schema) if schema is not None else q


# -- used fields -------------------------------------------------------------


def extract_used_fields(q: Query, schema: Schema) -> set[tuple[str, str]]:
    used: set[tuple[str, str]] = set()
    for p in q.projections:
        if isinstance(p, Star):
            for t in [p.table] if p.table else list(q.tables):
                used.update((t, c) for c in schema.table(t).column_names)
        elif isinstance(p, ColumnRef):
            used.add((p.table, p.column))
    for a in query_atoms(q):
        used.update((c.table, c.column) for c in atom_columns(a))
    used.update((c.table, c.column) for c in q.group_by)
    used.update((o.col.table, o.col.column) for o in q.order_by)
    return used


def filter_columns(q: Query) -> set[tuple[str, str]]:
    """Columns referenced outside the projection list."""
    used = set()
    for a in query_atoms(q):
        used.update((c.table, c.column) for c in atom_columns(a))
    used.update((c.table, c.column) for c in q.group_by)
    used.update((o.col.table, o.col.column) for o in q.order_by)
    return used


# -- generalisation and fingerprints -----------------------------------------


@dataclass(frozen=True)
class Slot:
    """One value position of a query: either an original parameter or a literal."""

    param: int | None
    literal: Any = None

    @property
    def is_literal(self) -> bool:
        return self.param is None


def generalize(q: Query) -> tuple[Query, tuple[Slot, ...]]:
    """Replace every literal and parameter by a fresh ordinal in textual order.

    Repeated occurrences of the same parameter share one slot; every literal
    occurrence gets its own slot.
    """
    slots: list[Slot] = []
    param_slot: dict[int, int] = {}

    def fn(o):
        if isinstance(o, Param):
            if o.index not in param_slot:
                slots.append(Slot(o.index))
                param_slot[o.index] = len(slots)
            return Param(param_slot[o.index])
        slots.append(Slot(None, o.value))
        return Param(len(slots))

    joins = tuple(Join(j.table, map_operands(j.on, fn), j.kind) for j in q.joins)
    where = map_operands(q.where, fn)
    out = replace(q, joins=joins, where=where, param_types=())
    return out, tuple(slots)


def fingerprint(q: Query) -> str:
    """Stable id for a query shape; literal values and parameter numbering do not count."""
    general, _ = generalize(q)
    text = render(general, slot=lambda o: "?")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:20]


def slot_values(q: Query, params: Sequence[Any]) -> list[Any]:
    """Concrete value of each generalized slot given the query's own parameters."""
    _, slots = generalize(q)
    out = []
    for s in slots:
        if s.is_literal:
            out.append(s.literal)
        else:
            if s.param > len(params):
                raise ArityError(f"missing value for ${s.param}")
            out.append(params[s.param - 1])
    return out


# -- instantiation -----------------------------------------------------------


def instantiate(q: Query, params: Sequence[Any]) -> Query:
    """Substitute parameter values, producing a ground query."""
    ordinals = params_of(q)
    needed = max(ordinals, default=0)
    if needed != len(params):
        missing = len(params) + 1 if needed > len(params) else needed + 1
        raise ArityError(f"arity mismatch at ${missing}: template has {needed} parameters, got {len(params)}")
    types = dict(q.param_types)

    def fn(o):
        if isinstance(o, Param):
            v = params[o.index - 1]
            typ = types.get(o.index)
            return Lit(coerce_literal(v, typ) if typ else v)
        return o

    return replace(
        q,
        joins=tuple(Join(j.table, map_operands(j.on, fn), j.kind) for j in q.joins),
        where=map_operands(q.where, fn),
    )


def literals_of(q: Query) -> list[Any]:
    return [s.literal for s in generalize(q)[1] if s.is_literal]


# -- query log ---------------------------------------------------------------


@dataclass(frozen=True)
class LogRecord:
    template: str
    params: tuple[Any, ...]

    def to_line(self) -> str:
        return format_log_line(self.template, self.params)


class LogFormatError(ValueError):
    pass


def parse_log_record(line: str) -> LogRecord:
    """Split ``TEMPLATE  [[v1], [v2]]`` into its template text and values."""
    text = line.rstrip("\r\n").strip()
    if not text:
        raise LogFormatError("empty log line")
    cut = text.rfind("  [")
    if cut < 0:
        if text.endswith("[]"):  # single-space separators appear in hand-written logs
            cut = text.rfind(" []")
        if cut < 0:
            return LogRecord(text, ())
    template, payload = text[:cut].strip(), text[cut:].strip()
    try:
        raw = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"bad parameter list: {exc}") from exc
    if not isinstance(raw, list):
        raise LogFormatError("parameter list must be a JSON array")
    values = []
    for item in raw:
        if isinstance(item, list):
            if not item:
                raise LogFormatError("empty parameter entry")
            values.append(item[-1])  # [value] or [name, value]
        else:
            values.append(item)
    return LogRecord(template, tuple(values))


def format_log_line(template: str, params: Sequence[Any]) -> str:
    payload = ", ".join(f"[{json.dumps(v, ensure_ascii=False)}]" for v in params)
    return f"{template}  [{payload}]"
