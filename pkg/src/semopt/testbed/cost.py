"""Heuristic cost model for ground queries, plus an external-provider hook.

The built-in model assumes a nested-loop plan over base tables in FROM/JOIN
order. Conjuncts that mention a single table are applied while scanning that
table; everything else is evaluated on joined rows. Cardinalities come from
per-column statistics of a database instance (row counts, distinct counts,
null fractions, value lists for range predicates).
"""

from __future__ import annotations

import bisect
import os
import shlex
import subprocess
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Any, Callable, Iterable, Sequence

from ..sqlir.ir import (
    FALSE,
    And,
    CharLength,
    ColumnRef,
    Compare,
    Const,
    Expr,
    InList,
    IsNull,
    Lit,
    Match,
    Not,
    Or,
    Query,
    atom_columns,
    conjuncts,
    iter_atoms,
)
from ..sqlir.render import render
from .database import Database

COST_PROVIDER_ENV = "SEMOPT_COST_PROVIDER"


@dataclass(frozen=True)
class CostWeights:
    scan_per_row: float = 1.0
    join_probe_per_pair: float = 1.0
    distinct_per_input_row: float = 2.0
    predicate_atom_per_row: float = 0.1
    output_per_row: float = 0.1


DEFAULT_WEIGHTS = CostWeights()


@dataclass
class ColumnStats:
    ndv: int
    null_frac: float
    values: list  # sorted non-null values


@dataclass
class TableStats:
    rows: int
    columns: dict[str, ColumnStats] = field(default_factory=dict)


class Statistics:
    """Per-table statistics gathered from one database instance."""

    def __init__(self, db: Database) -> None:
        self.tables: dict[str, TableStats] = {}
        for t in db.schema.tables:
            rows = db.rows(t.name)
            ts = TableStats(len(rows))
            for i, c in enumerate(t.columns):
                vals = [r[i] for r in rows if r[i] is not None]
                try:
                    vals.sort()
                except TypeError:
                    vals.sort(key=str)
                ts.columns[c.name] = ColumnStats(
                    ndv=len(set(vals)),
                    null_frac=(len(rows) - len(vals)) / len(rows) if rows else 0.0,
                    values=vals,
                )
            self.tables[t.name] = ts

    def rows(self, table: str) -> int:
        return self.tables[table].rows

    def column(self, ref: ColumnRef) -> ColumnStats:
        return self.tables[ref.table].columns[ref.column]


def _range_fraction(cs: ColumnStats, op: str, value: Any, n: int) -> float:
    vals = cs.values
    if not vals:
        return 0.0
    try:
        lo = bisect.bisect_left(vals, value)
        hi = bisect.bisect_right(vals, value)
    except TypeError:
        return 1.0 / 3.0
    count = {"<": lo, "<=": hi, ">": len(vals) - hi, ">=": len(vals) - lo}[op]
    frac = count / n
    # a predicate that matches nothing today may match tomorrow; never report zero
    return frac if frac > 0 else 0.5 / max(n, 1)


def selectivity(e: Expr | None, st: Statistics) -> float:
    if e is None:
        return 1.0
    if isinstance(e, And):
        out = 1.0
        for i in e.items:
            out *= selectivity(i, st)
        return out
    if isinstance(e, Or):
        miss = 1.0
        for i in e.items:
            miss *= 1.0 - selectivity(i, st)
        return 1.0 - miss
    if isinstance(e, Not):
        return max(0.0, 1.0 - selectivity(e.item, st))
    if isinstance(e, Const):
        return 1.0 if e.value else 0.0
    if isinstance(e, IsNull):
        nf = st.column(e.col).null_frac
        return 1.0 - nf if e.negated else nf
    if isinstance(e, InList):
        cs = st.column(e.col)
        return min(1.0, len(e.items) / max(cs.ndv, 1)) * (1.0 - cs.null_frac)
    if isinstance(e, Match):
        return 0.5 * (1.0 - st.column(e.col).null_frac)
    if isinstance(e, Compare):
        if isinstance(e.left, CharLength):
            return 1.0 / 3.0
        cs = st.column(e.left)
        live = 1.0 - cs.null_frac
        if isinstance(e.right, ColumnRef):
            other = st.column(e.right)
            if e.op == "=":
                return live * (1.0 - other.null_frac) / max(cs.ndv, other.ndv, 1)
            return live * (1.0 - other.null_frac) / 3.0
        if isinstance(e.right, Lit):
            if e.op == "=":
                return live / max(cs.ndv, 1)
            if e.op == "<>":
                return live * (1.0 - 1.0 / max(cs.ndv, 1))
            n = st.rows(e.left.table)
            return _range_fraction(cs, e.op, e.right.value, n)
        return 1.0 / 3.0
    return 1.0


def _expr_tables(e: Expr) -> set[str]:
    return {c.table for a in iter_atoms(e) for c in atom_columns(a)}


def _atom_count(e: Expr) -> int:
    return sum(1 for a in iter_atoms(e) if not isinstance(a, Const))


@dataclass
class CostBreakdown:
    scan: float = 0.0
    join: float = 0.0
    predicate: float = 0.0
    distinct: float = 0.0
    output: float = 0.0
    rows_before_limit: float = 0.0
    limit_fraction: float = 1.0

    @property
    def total(self) -> float:
        work = (self.scan + self.join + self.predicate) * self.limit_fraction
        return work + self.distinct + self.output


def cost_breakdown(q: Query, st: Statistics, w: CostWeights = DEFAULT_WEIGHTS) -> CostBreakdown:
    b = CostBreakdown()
    if q.where == FALSE:
        return b  # constant-folded away, nothing is read
    pushed: dict[str, list[Expr]] = {t: [] for t in q.tables}
    residual: list[Expr] = []
    for c in conjuncts(q.where):
        tabs = _expr_tables(c)
        if len(tabs) == 1:
            pushed[next(iter(tabs))].append(c)
        else:
            residual.append(c)

    first = q.from_table
    n0 = st.rows(first)
    b.scan = n0 * w.scan_per_row
    b.predicate = n0 * sum(_atom_count(c) for c in pushed[first]) * w.predicate_atom_per_row
    card = n0 * selectivity(And(tuple(pushed[first])) if pushed[first] else None, st)
    for j in q.joins:
        n = st.rows(j.table)
        pairs = card * n
        b.join += pairs * w.join_probe_per_pair
        local_atoms = 1 + sum(_atom_count(c) for c in pushed[j.table])
        b.predicate += pairs * local_atoms * w.predicate_atom_per_row
        local = selectivity(And(tuple(pushed[j.table])) if pushed[j.table] else None, st)
        if j.kind == "LEFT":
            card = max(card, pairs * selectivity(j.on, st) * local)
        else:
            card = pairs * selectivity(j.on, st) * local
    if residual:
        b.predicate += card * sum(_atom_count(c) for c in residual) * w.predicate_atom_per_row
        card *= selectivity(And(tuple(residual)), st)

    if q.is_aggregate:
        if q.group_by:
            b.distinct += card * w.distinct_per_input_row
            ndv = 1
            for c in q.group_by:
                ndv *= max(st.column(c).ndv, 1)
            card = min(card, float(ndv))
        else:
            card = 1.0
    if q.distinct:
        b.distinct += card * w.distinct_per_input_row
    b.rows_before_limit = card
    out = card
    if q.limit is not None:
        out = min(card, float(q.limit))
        streaming = not q.order_by and not q.is_aggregate
        if streaming and card > q.limit:
            b.limit_fraction = q.limit / card
    b.output = out * w.output_per_row
    return b


CostFn = Callable[[Query], float]


def builtin_cost(db: Database, weights: CostWeights = DEFAULT_WEIGHTS) -> CostFn:
    st = Statistics(db)
    return lambda q: cost_breakdown(q, st, weights).total


class CostProviderError(RuntimeError):
    pass


def external_cost(command: str, timeout: float = 30.0) -> CostFn:
    """Cost function backed by a subprocess: SQL on stdin, one decimal on stdout."""
    argv = shlex.split(command)

    def cost(q: Query) -> float:
        try:
            proc = subprocess.run(
                argv, input=render(q) + "\n", capture_output=True, text=True, timeout=timeout, check=False
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise CostProviderError(f"cost provider failed: {exc}") from exc
        if proc.returncode != 0:
            raise CostProviderError(f"cost provider exited {proc.returncode}: {proc.stderr.strip()}")
        try:
            return float(Decimal(proc.stdout.strip()))
        except InvalidOperation as exc:
            raise CostProviderError(f"cost provider printed {proc.stdout.strip()!r}") from exc

    return cost


def resolve_cost_fn(db: Database, provider: str | None = None) -> CostFn:
    provider = provider or os.environ.get(COST_PROVIDER_ENV)
    if provider:
        return external_cost(provider)
    return builtin_cost(db)


def average_cost(cost: CostFn, queries: Iterable[Query]) -> float:
    qs = list(queries)
    return sum(cost(q) for q in qs) / len(qs) if qs else 0.0


def filter_by_cost(candidates: Sequence, original_cost: float, cost_of: Callable[[Any], float]):
    """Keep candidates strictly cheaper than the original; ties are dropped."""
    kept = []
    for c in candidates:
        value = cost_of(c)
        if value < original_cost:
            kept.append((c, value))
    return kept
