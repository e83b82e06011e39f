"""Bag-semantics evaluator for the supported SELECT subset.

Plans are compiled once per (query, schema) and cached. Execution order is
FROM/JOIN (hash join on the equality condition), WHERE with three-valued
logic, GROUP BY/COUNT/HAVING, ORDER BY, projection, DISTINCT (first
occurrence kept), LIMIT. Without ORDER BY rows keep insertion order.
"""

from __future__ import annotations

import functools
import operator
from dataclasses import dataclass
from typing import Any, Callable

from ..regex import postgres_to_python
from ..schema import Schema
from ..sqlir.ir import (
    And,
    CharLength,
    ColumnRef,
    Compare,
    Const,
    CountStar,
    Expr,
    InList,
    IsNull,
    Lit,
    Match,
    Not,
    Or,
    Param,
    Query,
    Star,
)
from .database import Database


class EvaluationError(ValueError):
    pass


@dataclass
class ExecStats:
    rows_scanned: int = 0
    join_pairs: int = 0
    predicate_evals: int = 0
    distinct_ops: int = 0
    output_rows: int = 0

    def add(self, other: "ExecStats") -> None:
        self.rows_scanned += other.rows_scanned
        self.join_pairs += other.join_pairs
        self.predicate_evals += other.predicate_evals
        self.distinct_ops += other.distinct_ops
        self.output_rows += other.output_rows


_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "=": operator.eq,
    "<>": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _compare(op: str):
    fn = _OPS[op]

    def cmp(a, b):
        if a is None or b is None:
            return None
        try:
            return fn(a, b)
        except TypeError:
            # values of incompatible types never compare equal or ordered
            return op == "<>"

    return cmp


class _Counter:
    __slots__ = ("n",)

    def __init__(self) -> None:
        self.n = 0


def _compile_expr(e: Expr, layout: dict[tuple[str, str], int], counter: _Counter | None):
    """Return ``row -> True | False | None``."""
    if isinstance(e, And):
        parts = [_compile_expr(i, layout, counter) for i in e.items]

        def f_and(row):
            result = True
            for p in parts:
                v = p(row)
                if v is False:
                    return False
                if v is None:
                    result = None
            return result

        return f_and
    if isinstance(e, Or):
        parts = [_compile_expr(i, layout, counter) for i in e.items]

        def f_or(row):
            result = False
            for p in parts:
                v = p(row)
                if v is True:
                    return True
                if v is None:
                    result = None
            return result

        return f_or
    if isinstance(e, Not):
        inner = _compile_expr(e.item, layout, counter)

        def f_not(row):
            v = inner(row)
            return None if v is None else not v

        return f_not
    atom = _compile_atom(e, layout)
    if counter is None:
        return atom

    def counted(row):
        counter.n += 1
        return atom(row)

    return counted


def _getter(o, layout):
    if isinstance(o, ColumnRef):
        idx = layout[o.key]
        return lambda row: row[idx]
    if isinstance(o, CharLength):
        idx = layout[o.col.key]

        def length(row):
            v = row[idx]
            return None if v is None else len(str(v))

        return length
    if isinstance(o, Lit):
        v = o.value
        return lambda row: v
    if isinstance(o, Param):
        raise EvaluationError(f"unbound parameter ${o.index}")
    raise EvaluationError(f"bad operand {o!r}")


def _compile_atom(a, layout):
    if isinstance(a, Const):
        v = a.value
        return lambda row: v
    if isinstance(a, Compare):
        left = _getter(a.left, layout)
        cmp = _compare(a.op)
        if isinstance(a.right, Lit):
            const = a.right.value
            if const is None:
                return lambda row: None
            return lambda row: cmp(left(row), const)
        right = _getter(a.right, layout)
        return lambda row: cmp(left(row), right(row))
    if isinstance(a, InList):
        col = _getter(a.col, layout)
        values = []
        for it in a.items:
            if isinstance(it, Param):
                raise EvaluationError(f"unbound parameter ${it.index}")
            values.append(it.value)
        has_null = any(v is None for v in values)
        concrete = [v for v in values if v is not None]

        def f_in(row):
            v = col(row)
            if v is None:
                return None
            for c in concrete:
                try:
                    if v == c:
                        return True
                except TypeError:
                    pass
            return None if has_null else False

        return f_in
    if isinstance(a, IsNull):
        col = _getter(a.col, layout)
        if a.negated:
            return lambda row: col(row) is not None
        return lambda row: col(row) is None
    if isinstance(a, Match):
        col = _getter(a.col, layout)
        rx = postgres_to_python(a.pattern, a.case_insensitive)

        def f_match(row):
            v = col(row)
            return None if v is None else rx.search(str(v)) is not None

        return f_match
    raise EvaluationError(f"cannot evaluate {a!r}")


def _sort_rows(rows: list, keys: list[tuple[int, bool]]) -> list:
    # stable sorts from the least significant key up; NULLs sort as the
    # largest value (last when ascending, first when descending)
    for idx, desc in reversed(keys):
        nonnull = [r for r in rows if r[idx] is not None]
        nulls = [r for r in rows if r[idx] is None]
        try:
            nonnull.sort(key=lambda r: r[idx], reverse=desc)
        except TypeError:
            nonnull.sort(key=lambda r: (type(r[idx]).__name__, str(r[idx])), reverse=desc)
        rows = nulls + nonnull if desc else nonnull + nulls
    return rows


class Plan:
    """Compiled executable form of a ground query."""

    def __init__(self, q: Query, schema: Schema, counting: bool) -> None:
        self.query = q
        self.tables = q.tables
        layout: dict[tuple[str, str], int] = {}
        widths = []
        for t in self.tables:
            cols = schema.table(t).column_names
            widths.append(len(cols))
            for c in cols:
                layout[(t, c)] = len(layout)
        self.layout = layout
        self.widths = widths
        self.counter = _Counter() if counting else None

        # joins: index of the probing column (already joined) and build column (new table)
        self.join_steps = []
        offset = widths[0]
        seen = {self.tables[0]}
        for j, width in zip(q.joins, widths[1:]):
            a, b = j.on.left, j.on.right
            if not isinstance(b, ColumnRef):
                raise EvaluationError("join condition must compare two columns")
            if a.table == j.table and b.table in seen:
                a, b = b, a
            if b.table != j.table or a.table not in seen:
                raise EvaluationError(f"join on {j.table} does not link to earlier tables")
            local_idx = schema.table(j.table).column_names.index(b.column)
            self.join_steps.append((j.table, layout[a.key], local_idx, j.kind == "LEFT", width))
            seen.add(j.table)
            offset += width

        self.where = None
        if q.where is not None:
            self.where = _compile_expr(q.where, layout, self.counter)

        # projection
        proj: list[int] = []
        self.count_pos: list[int] = []
        for p in q.projections:
            if isinstance(p, Star):
                for t in [p.table] if p.table else self.tables:
                    for c in schema.table(t).column_names:
                        proj.append(layout[(t, c)])
            elif isinstance(p, CountStar):
                self.count_pos.append(len(proj))
                proj.append(-1)
            else:
                proj.append(layout[p.key])
        self.proj = proj
        self.group_idx = [layout[c.key] for c in q.group_by]
        self.order_keys = [(layout[o.col.key], o.descending) for o in q.order_by]
        self.aggregate = q.is_aggregate

    def run(self, db: Database, stats: ExecStats | None = None) -> list[tuple]:
        q = self.query
        base = list(db.rows(self.tables[0]))
        scanned = len(base)
        pairs = 0
        rows = base
        for table, probe_idx, build_idx, left, width in self.join_steps:
            right_rows = db.rows(table)
            scanned += len(right_rows)
            index: dict[Any, list[tuple]] = {}
            for r in right_rows:
                k = r[build_idx]
                if k is not None:
                    index.setdefault(k, []).append(r)
            nulls = (None,) * width
            out = []
            for r in rows:
                k = r[probe_idx]
                matches = index.get(k) if k is not None else None
                if matches:
                    pairs += len(matches)
                    for m in matches:
                        out.append(r + m)
                elif left:
                    out.append(r + nulls)
            rows = out

        if self.where is not None:
            if self.counter is not None:
                self.counter.n = 0
            w = self.where
            rows = [r for r in rows if w(r) is True]

        if self.aggregate:
            rows = self._aggregate(rows)
        else:
            if self.order_keys:
                rows = _sort_rows(rows, self.order_keys)
            proj = self.proj
            rows = [tuple(r[i] for i in proj) for r in rows]

        distinct_in = 0
        if q.distinct:
            distinct_in = len(rows)
            seen = set()
            uniq = []
            for r in rows:
                if r not in seen:
                    seen.add(r)
                    uniq.append(r)
            rows = uniq
        if q.limit is not None:
            rows = rows[: q.limit]
        if stats is not None:
            stats.rows_scanned += scanned
            stats.join_pairs += pairs
            stats.predicate_evals += self.counter.n if self.counter is not None else 0
            stats.distinct_ops += distinct_in
            stats.output_rows += len(rows)
        return rows

    def _aggregate(self, rows: list[tuple]) -> list[tuple]:
        q = self.query
        if not self.group_idx:
            groups = {(): rows}
        else:
            groups: dict[tuple, list[tuple]] = {}
            for r in rows:
                groups.setdefault(tuple(r[i] for i in self.group_idx), []).append(r)
        out = []
        for key, members in groups.items():
            n = len(members)
            if q.having_count_gt is not None and not n > q.having_count_gt:
                continue
            sample = members[0] if members else None
            vals = []
            for i in self.proj:
                vals.append(n if i == -1 else sample[i])
            out.append((key, tuple(vals), sample))
        if self.order_keys:
            wrapped = [s + (v,) for (_, v, s) in out]
            pos = len(wrapped[0]) - 1 if wrapped else 0
            wrapped = _sort_rows(wrapped, self.order_keys)
            return [w[pos] for w in wrapped]
        return [v for (_, v, _) in out]


@functools.lru_cache(maxsize=4096)
def compile_plan(q: Query, schema: Schema, counting: bool = False) -> Plan:
    return Plan(q, schema, counting)


def evaluate(q: Query, db: Database, stats: ExecStats | None = None) -> list[tuple]:
    """Rows of ``q`` on ``db`` in engine order (compare as bags)."""
    return compile_plan(q, db.schema, stats is not None).run(db, stats)


def execute(q: Query, db: Database) -> tuple[list[tuple], ExecStats]:
    stats = ExecStats()
    rows = evaluate(q, db, stats)
    return rows, stats
