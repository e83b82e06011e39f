"""Synthetic databases that satisfy a constraint set by construction.

Tables are filled in foreign-key topological order. Each column gets a value
sampler derived from its constraints; uniqueness over a finite value space is
met by sampling distinct tuples without replacement, otherwise by rejection.
Conditional uniqueness is enforced unconditionally, which is stronger.
"""

from __future__ import annotations

import datetime as _dt
import graphlib
import math
import random
import string
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from ..constraints import (
    ConstraintSet,
    ForeignKey,
    Format,
    Inclusion,
    Length,
    Numerical,
    Presence,
    Uniqueness,
    all_hold,
    value_admitted,
)
from ..regex import sample_matching
from ..schema import ColumnDef, Schema
from .database import Database

NULL_RATE = 0.1
_ALPHABET = string.ascii_lowercase
_EPOCH = _dt.datetime(2020, 1, 1)


class GenerationError(ValueError):
    pass


class CyclicForeignKeys(GenerationError):
    def __init__(self, cycle: Sequence[str]) -> None:
        super().__init__("foreign-key cycle: " + " -> ".join(cycle))
        self.cycle = list(cycle)


def population_order(schema: Schema, cs: ConstraintSet) -> list[str]:
    """Tables ordered so that every referenced table precedes its referrers."""
    graph: dict[str, set[str]] = {t: set() for t in schema.table_names}
    for c in cs.of_kind(ForeignKey):
        if c.kind.ref_table != c.table:
            graph[c.table].add(c.kind.ref_table)
        elif not schema.column(c.table, c.column).nullable:
            raise CyclicForeignKeys([c.table, c.table])
    sorter = graphlib.TopologicalSorter(graph)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        raise CyclicForeignKeys(exc.args[1]) from None
    order: list[str] = []
    # ready sets are emitted in schema order for determinism
    rank = {t: i for i, t in enumerate(schema.table_names)}
    while sorter.is_active():
        ready = sorted(sorter.get_ready(), key=rank.__getitem__)
        order.extend(ready)
        sorter.done(*ready)
    return order


@dataclass
class _ColumnPlan:
    col: ColumnDef
    nullable: bool
    finite: list | None  # explicit value list when the domain is finite
    sample: Callable[[random.Random], Any] | None
    sequential: bool = False
    widenable: bool = False  # unconstrained integer; range may grow for uniqueness


def _random_word(rng: random.Random, n: int) -> str:
    return "".join(rng.choice(_ALPHABET) for _ in range(n))


def _int_range(num: Numerical | None, default_lo: int, default_hi: int) -> tuple[int, int]:
    if num is None:
        return default_lo, default_hi
    if num.equal is not None:
        v = int(num.equal)
        return v, v
    lo = hi = None
    if num.lower is not None:
        lv = num.lower.value
        lo = math.ceil(lv) if num.lower.inclusive else math.floor(lv) + 1
    if num.upper is not None:
        uv = num.upper.value
        hi = math.floor(uv) if num.upper.inclusive else math.ceil(uv) - 1
    span = default_hi - default_lo
    if lo is None and hi is None:
        return default_lo, default_hi
    if lo is None:
        lo = hi - span
    if hi is None:
        hi = lo + span
    return lo, hi


class _TablePlanner:
    def __init__(
        self,
        schema: Schema,
        cs: ConstraintSet,
        table: str,
        n: int,
        parents: Mapping[str, list],
        hints: Mapping[tuple[str, str], Sequence[Any]],
    ) -> None:
        self.table = schema.table(table)
        self.n = n
        self.cs = cs
        groups: list[tuple[str, ...]] = []
        for c in cs.on_table(table):
            if isinstance(c.kind, Uniqueness) and c.columns not in groups:
                groups.append(c.columns)
        self.groups = groups
        in_group = {col for g in groups for col in g}
        self.plans: dict[str, _ColumnPlan] = {}
        for col in self.table.columns:
            self.plans[col.name] = self._plan(col, col.name in in_group, parents, hints)
        for g in groups:
            self._widen(g)

    def _plan(self, col: ColumnDef, unique: bool, parents, hints) -> _ColumnPlan:
        name = col.name
        kinds = [c.kind for c in self.cs.on_column(self.table.name, name) if not isinstance(c.kind, Uniqueness)]
        present = col.is_primary_key or not col.nullable or any(isinstance(k, Presence) for k in kinds)
        local = [k for k in kinds if not isinstance(k, (Presence, ForeignKey))]

        def ok(v) -> bool:
            return all(value_admitted(k, v) for k in local)

        if col.is_primary_key and col.type == "integer" and not local:
            return _ColumnPlan(col, False, None, None, sequential=True)

        fks = [k for k in kinds if isinstance(k, ForeignKey)]
        if fks:
            pool = None
            for fk in fks:
                keys = parents.get((fk.ref_table, fk.ref_column), [])
                keyset = [v for v in dict.fromkeys(keys) if v is not None]
                pool = keyset if pool is None else [v for v in pool if v in set(keyset)]
            return self._finite(col, not present, [v for v in pool if ok(v)])

        inclusion = [k for k in kinds if isinstance(k, Inclusion)]
        if inclusion:
            values = list(inclusion[0].values)
            return self._finite(col, not present, [v for v in values if ok(v)])
        if col.type == "enum":
            return self._finite(col, not present, [v for v in col.enum_values if ok(v)])
        if col.type == "boolean":
            return self._finite(col, not present, [v for v in (False, True) if ok(v)])

        nums = [k for k in kinds if isinstance(k, Numerical)]
        if any(k.unsatisfiable for k in local):
            return self._finite(col, not present, [])
        num = nums[0] if nums else None
        if col.type == "integer":
            lo, hi = _int_range(num, 1, max(10, self.n // 10))
            if hi - lo <= 100_000:
                plan = self._finite(col, not present, [v for v in range(lo, hi + 1) if ok(v)])
                plan.widenable = not local
                return plan
            return _ColumnPlan(col, not present, None, lambda rng: rng.randint(lo, hi))
        if col.type == "float":
            lo, hi = _int_range(num, 0, max(10, self.n))

            def sample_float(rng, lo=lo, hi=hi):
                for _ in range(100):
                    v = round(rng.uniform(lo - 1, hi + 1), 2)
                    if ok(v):
                        return v
                raise GenerationError(f"{self.table.name}.{name}: no float satisfies the constraints")

            return _ColumnPlan(col, not present, None, sample_float)
        if col.type == "timestamp":
            def sample_ts(rng):
                return (_EPOCH + _dt.timedelta(seconds=rng.randrange(86400 * 365))).isoformat(sep=" ")

            return _ColumnPlan(col, not present, None, sample_ts)

        # text
        formats = [k for k in kinds if isinstance(k, Format)]
        lengths = [k for k in kinds if isinstance(k, Length)]
        length = lengths[0] if lengths else None
        if formats and any(f.checkable_patterns for f in formats):
            patterns = [(p.source, p.flags) for f in formats for p in f.checkable_patterns]

            def sample_format(rng):
                text = sample_matching(patterns, rng, accept=ok)
                if text is None:
                    raise GenerationError(f"{self.table.name}.{name}: cannot sample the format")
                return text

            return _ColumnPlan(col, not present, None, sample_format)
        lo = length.min if length and length.min is not None else 3
        hi = length.max if length and length.max is not None else max(lo, 8) + 4
        lo = min(lo, hi)
        if unique or length is not None:
            def sample_text(rng, lo=lo, hi=hi):
                return _random_word(rng, rng.randint(lo, hi))

            return _ColumnPlan(col, not present, None, sample_text)
        seeds = [h for h in hints.get((self.table.name, name), ()) if isinstance(h, str) and ok(h)]
        pool_rng = random.Random(f"{self.table.name}.{name}")
        pool = list(dict.fromkeys(seeds))
        while len(pool) < max(10, len(seeds)):
            pool.append(_random_word(pool_rng, pool_rng.randint(lo, hi)))
        return self._finite(col, not present, pool)

    def _widen(self, group: tuple[str, ...]) -> None:
        plans = [self.plans[c] for c in group]
        grow = [p for p in plans if p.widenable]
        if not grow:
            return
        fixed_space = math.prod(self._domain_size(p) for p in plans if not p.widenable)
        if fixed_space * math.prod(self._domain_size(p) for p in grow) >= 2 * self.n:
            return
        width = math.ceil((2 * self.n / fixed_space) ** (1 / len(grow))) if fixed_space else 1
        for p in grow:
            p.finite = list(range(1, max(width, len(p.finite)) + 1))

    def _finite(self, col: ColumnDef, nullable: bool, values: list) -> _ColumnPlan:
        if not values and not nullable and self.n > 0:
            raise GenerationError(f"{self.table.name}.{col.name}: no value satisfies the constraints")
        return _ColumnPlan(col, nullable, list(values), None)

    # -- row generation ----------------------------------------------------

    def _draw(self, plan: _ColumnPlan, rng: random.Random, row_no: int):
        if plan.sequential:
            return row_no + 1
        if plan.nullable and (not plan.finite and plan.sample is None or rng.random() < NULL_RATE):
            return None
        if plan.finite is not None:
            return rng.choice(plan.finite)
        return plan.sample(rng)

    def _domain_size(self, plan: _ColumnPlan) -> float:
        if plan.sequential:
            return math.inf
        if plan.finite is None:
            return math.inf
        return len(plan.finite) + (1 if plan.nullable else 0)

    def generate(self, rng: random.Random) -> tuple[tuple, ...]:
        names = self.table.column_names
        n = self.n
        for g in self.groups:
            space = math.prod(self._domain_size(self.plans[c]) for c in g)
            if space < n:
                raise GenerationError(
                    f"uniqueness on {self.table.name}({', '.join(g)}) needs {n} distinct values "
                    f"but only {space} exist"
                )
        fixed: dict[str, list] = {}
        # sample the first fully-finite group without replacement
        for g in self.groups:
            plans = [self.plans[c] for c in g]
            if any(c in fixed for c in g) or not all(p.finite is not None for p in plans):
                continue
            domains = [list(p.finite) + ([None] if p.nullable else []) for p in plans]
            size = math.prod(len(d) for d in domains)
            if size > 2_000_000:
                continue
            picks = rng.sample(range(size), n)
            cols = {c: [] for c in g}
            for code in picks:
                for c, d in zip(reversed(g), reversed(domains)):
                    code, digit = divmod(code, len(d))
                    cols[c].append(d[digit])
            fixed.update(cols)
            break

        seen = [set() for _ in self.groups]
        rows = []
        for i in range(n):
            row = {}
            for name in names:
                row[name] = fixed[name][i] if name in fixed else self._draw(self.plans[name], rng, i)
            for attempt in range(2000):
                clash = [gi for gi, g in enumerate(self.groups) if tuple(row[c] for c in g) in seen[gi]]
                if not clash:
                    break
                free = [c for gi in clash for c in self.groups[gi] if c not in fixed and not self.plans[c].sequential]
                if not free:
                    raise GenerationError(f"cannot keep {self.table.name} unique with the fixed columns")
                for c in free:
                    row[c] = self._draw(self.plans[c], rng, i)
            else:
                raise GenerationError(f"rejection sampling for uniqueness on {self.table.name} did not converge")
            for gi, g in enumerate(self.groups):
                seen[gi].add(tuple(row[c] for c in g))
            rows.append(tuple(row[c] for c in names))
        return tuple(rows)


def generate_database(
    schema: Schema,
    cs: ConstraintSet,
    sizes: Mapping[str, int] | int = 100,
    seed: int = 0,
    hints: Mapping[tuple[str, str], Sequence[Any]] | None = None,
) -> Database:
    """Populate every table of ``schema`` with rows satisfying ``cs``.

    ``hints`` lists preferred values for unconstrained text columns, typically
    literals seen in the query log, so equality predicates have matches.
    """
    rng = random.Random(seed)
    order = population_order(schema, cs)
    tables: dict[str, tuple[tuple, ...]] = {}
    parents: dict[tuple[str, str], list] = {}
    for t in order:
        n = sizes if isinstance(sizes, int) else sizes.get(t, 0)
        planner = _TablePlanner(schema, cs, t, n, parents, hints or {})
        rows = planner.generate(random.Random(rng.random()))
        tables[t] = rows
        cols = schema.table(t).column_names
        for i, c in enumerate(cols):
            parents[(t, c)] = [r[i] for r in rows]
    db = Database(schema, {t.name: tables[t.name] for t in schema.tables}, constraint_valid=True)
    if not all_hold(cs, db.as_dicts()):
        raise GenerationError("generated database violates its constraints")
    return db
