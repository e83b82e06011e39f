"""Bounded equivalence checking of query rewrites.

Two templates are compared on every constraint-satisfying database with at
most ``bound`` rows per referenced table, over a finite value domain, and on
every parameter valuation over that domain. A positive verdict is therefore a
certificate only up to the bound; a negative verdict carries a concrete,
replayable database and parameter list.

The instance space is kept small by a few exact reductions:

* Only tables and columns the queries touch are enumerated. Columns that only
  appear in the projection list ("passive" columns) either vanish, when the
  projection also contains a non-NULL unique key of their table, or collapse
  into one identity column whose values only encode which rows agree.
* Columns linked by equality, comparison or foreign keys share a value
  family. Families without literals, ordering or value constraints use
  interchangeable values, so their parameters can be pinned in
  first-occurrence order.
"""

from __future__ import annotations

import itertools
import math
import random
import string
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

from .constraints import (
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
from .regex import sample_matching
from .schema import NUMERIC_TYPES, ColumnDef, Schema, TableDef
from .sqlir.ir import (
    CharLength,
    ColumnRef,
    Compare,
    InList,
    Lit,
    Match,
    Param,
    Query,
    Star,
    params_of,
    query_atoms,
)
from .sqlir.template import filter_columns, instantiate
from .testbed.database import Database
from .testbed.difftest import comparison_mode, results_differ, strip_limit as _strip_limit
from .testbed.engine import compile_plan

DEFAULT_BOUND = 3
DEFAULT_SYMBOLS = 3
DEFAULT_CEILING = 10**7
IDENTITY = "__row"


@dataclass(frozen=True)
class VerificationTask:
    original: Query
    candidate: Query
    cs: ConstraintSet
    schema: Schema
    bound: int = DEFAULT_BOUND
    symbols: int = DEFAULT_SYMBOLS
    ceiling: int = DEFAULT_CEILING

    def __post_init__(self) -> None:
        if self.bound < 1:
            raise ValueError("bound must be at least 1")
        if self.symbols < 2:
            raise ValueError("value domain needs at least two values per column")


@dataclass(frozen=True)
class EquivalentUpToBound:
    bound: int
    instances: int = 0

    @property
    def equivalent(self) -> bool:
        return True


@dataclass(frozen=True)
class NotEquivalent:
    database: Database
    params: tuple
    original_rows: tuple
    candidate_rows: tuple
    reason: str
    instances: int = 0

    @property
    def equivalent(self) -> bool:
        return False


@dataclass(frozen=True)
class Skipped:
    reason: str
    estimate: int | None = None

    @property
    def equivalent(self) -> bool:
        return False


Verdict = EquivalentUpToBound | NotEquivalent | Skipped


# -- admissible values ------------------------------------------------------------


def admissible_values(schema: Schema, cs: ConstraintSet, table: str, column: str, n: int) -> list:
    """Up to ``n`` distinct non-NULL values satisfying the column-local constraints."""
    col = schema.column(table, column)
    local = [
        c.kind
        for c in cs.on_column(table, column)
        if not isinstance(c.kind, (Presence, Uniqueness, ForeignKey))
    ]

    def ok(v) -> bool:
        return all(value_admitted(k, v) for k in local)

    pool: list = []
    incl = [k for k in local if isinstance(k, Inclusion)]
    if incl:
        pool = list(incl[0].values)
    elif col.type == "enum":
        pool = list(col.enum_values)
    elif col.type == "boolean":
        pool = [False, True]
    elif col.type in NUMERIC_TYPES:
        lo, hi = 1, 1 + 4 * n
        for k in local:
            if isinstance(k, Numerical):
                if k.equal is not None:
                    lo = hi = k.equal
                else:
                    if k.lower is not None:
                        lo = math.floor(k.lower.value) + (0 if k.lower.inclusive else 1)
                        hi = max(hi, lo + 4 * n)
                    if k.upper is not None:
                        hi = math.ceil(k.upper.value)
                        if k.lower is None:
                            lo = hi - 4 * n
        pool = list(range(int(lo), int(hi) + 1))
        if col.type == "float":
            pool += [v + 0.5 for v in pool]
    elif col.type == "timestamp":
        pool = [f"2020-01-{d:02d} 00:00:00" for d in range(1, 29)]
    else:
        fmts = [p for k in local if isinstance(k, Format) for p in k.checkable_patterns]
        lengths = [k for k in local if isinstance(k, Length)]
        if fmts:
            rng = random.Random(f"{table}.{column}")
            patterns = [(p.source, p.flags) for p in fmts]
            seen: list = []
            for _ in range(20 * n):
                s = sample_matching(patterns, rng, accept=ok, attempts=50)
                if s is not None and s not in seen:
                    seen.append(s)
                if len(seen) >= n:
                    break
            pool = seen
        else:
            lo = max((k.min or 0 for k in lengths), default=0)
            hi = min((k.max for k in lengths if k.max is not None), default=max(lo, 2) + 2)
            length = max(lo, min(hi, 2))
            pool = []
            for word in _words(length):
                pool.append(word)
                if len(pool) >= 4 * n:
                    break
    return [v for v in pool if ok(v)][:n]


def _words(length: int) -> Iterator[str]:
    if length == 0:
        yield ""
        return
    for combo in itertools.product(string.ascii_lowercase, repeat=length):
        yield "".join(combo)


# -- families ---------------------------------------------------------------------


class _UF:
    def __init__(self) -> None:
        self.p: dict = {}

    def find(self, x):
        self.p.setdefault(x, x)
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if repr(rb) < repr(ra):
                ra, rb = rb, ra
            self.p[rb] = ra


@dataclass
class _Family:
    members: list = field(default_factory=list)  # ("col", t, c) or ("param", i)
    anchors: list = field(default_factory=list)
    ordered: bool = False
    lengths: list = field(default_factory=list)
    formats: list = field(default_factory=list)
    col_type: str = "text"

    @property
    def symmetric(self) -> bool:
        return not (self.anchors or self.ordered or self.lengths or self.formats) and self.col_type not in (
            "boolean",
            "enum",
        )


def _neighbours(v, col_type: str) -> list:
    if isinstance(v, bool):
        return [v]
    if col_type == "integer" and isinstance(v, (int, float)):
        c = int(math.floor(v))
        return sorted({c - 1, c, c + 1, int(math.ceil(v)), int(math.ceil(v)) + 1} if v != c else {c - 1, c, c + 1})
    if col_type == "float" and isinstance(v, (int, float)):
        return [v - 0.5, v, v + 0.5]
    return [v]


def _family_domain(fam: _Family, symbols: int) -> list:
    t = fam.col_type
    if fam.symmetric:
        if t in NUMERIC_TYPES:
            return list(range(1, symbols + 1))
        if t == "timestamp":
            return [f"2020-01-0{i} 00:00:00" for i in range(1, symbols + 1)]
        return [chr(ord("a") + i) for i in range(symbols)]
    values: list = []

    def add(v):
        if v not in values:
            values.append(v)

    if t == "boolean":
        for v in (False, True):
            add(v)
    for a in fam.anchors:
        if t in NUMERIC_TYPES and not isinstance(a, bool) and isinstance(a, (int, float)):
            for v in _neighbours(a, t):
                add(v)
        else:
            add(a)
    if t in NUMERIC_TYPES:
        base = sorted(v for v in values if isinstance(v, (int, float)))
        nxt = (max(base) + 1) if base else 1
        while len(values) < symbols:
            add(nxt)
            nxt += 1
        return sorted(values)
    for L in fam.lengths:
        for n in (L - 1, L, L + 1):
            if n >= 0:
                add("m" * n)
    for fmt in fam.formats:
        rng = random.Random(repr(fmt))
        s = sample_matching(list(fmt), rng)
        if s is not None:
            add(s)
        add("#")
    i = 0
    while len(values) < max(symbols, len(fam.anchors) + 1) and t != "boolean":
        add(f"fresh{i}" if t != "timestamp" else f"2021-01-0{i + 1} 00:00:00")
        i += 1
    return values


# -- the instance space -------------------------------------------------------------


def _expand_projection(q: Query, schema: Schema) -> list[tuple[str, str]]:
    cols = []
    for p in q.projections:
        if isinstance(p, Star):
            for t in [p.table] if p.table else list(q.tables):
                cols.extend((t, c) for c in schema.table(t).column_names)
        elif isinstance(p, ColumnRef):
            cols.append((p.table, p.column))
    return cols


@dataclass
class _TableSpace:
    name: str
    columns: list[str]  # reduced column order
    domains: list[list]
    by_size: list[list[tuple]]  # valid multisets of rows grouped by row count


class InstanceSpace:
    """All reduced databases and parameter valuations for one task."""

    def __init__(self, task: VerificationTask) -> None:
        self.task = task
        schema, cs = task.schema, task.cs
        q, c = task.original, task.candidate
        self.schema = schema
        tables = [t for t in schema.table_names if t in set(q.tables) | set(c.tables)]
        self.tables = tables
        filt = filter_columns(q) | filter_columns(c)
        same_proj = q.projections == c.projections
        projected = set(_expand_projection(q, schema)) | set(_expand_projection(c, schema))
        bound = task.bound

        # which columns must be enumerated
        kept: set[tuple[str, str]] = set(k for k in filt if k[0] in tables)
        self.fks: list = []
        for con in cs.of_kind(ForeignKey):
            if con.table in tables and con.kind.ref_table in tables:
                kept.add((con.table, con.column))
                kept.add((con.kind.ref_table, con.kind.ref_column))
                self.fks.append(con)
        unique_groups = [u for u in cs.of_kind(Uniqueness) if u.table in tables]
        pk_groups = [
            (t, (col.name,))
            for t in tables
            for col in schema.table(t).columns
            if col.is_primary_key
        ]
        self._admissible_cache: dict = {}

        proj_set = set(_expand_projection(q, schema))
        # a projected non-null key pins every other projected column of its table
        keys = set()
        for t in tables:
            cands = [
                col.name
                for col in schema.table(t).columns
                if (t, col.name) in proj_set and self._unique_not_null(t, col.name)
            ]
            cands.sort(key=lambda name: not schema.column(t, name).is_primary_key)
            if cands:
                keys.add((t, cands[0]))
        keyed_tables = {t for t, _ in keys} if same_proj else set()

        def free(t: str, col: str) -> bool:
            if (t, col) in kept or (t, col) in keys:
                return False
            if (t, col) in projected and t not in keyed_tables:
                return False
            return len(self._admissible(t, col, bound)) >= bound

        def group_cols(u) -> tuple:
            cols = u.columns
            if u.kind.condition is not None:
                cols = cols + (u.kind.condition.column,)
            return cols

        enforced: list = []
        changed = True
        while changed:
            changed = False
            for u in unique_groups:
                cols = group_cols(u)
                if u in enforced or any(free(u.table, col) for col in cols):
                    continue
                enforced.append(u)
                for col in cols:
                    if (u.table, col) not in kept:
                        kept.add((u.table, col))
                        changed = True
            for t, cols in pk_groups:
                if any(free(t, col) for col in cols):
                    continue
                for col in cols:
                    if (t, col) not in kept:
                        kept.add((t, col))
                        changed = True
        self.unique_groups = enforced
        self.pk_groups = [(t, cols) for t, cols in pk_groups if all((t, col) in kept for col in cols)]

        passive: dict[str, list[str]] = {t: [] for t in tables}
        for t in tables:
            for col in schema.table(t).column_names:
                key = (t, col)
                if key in projected and key not in kept:
                    if same_proj:
                        passive[t].append(col)
                    else:
                        kept.add(key)
        self.kept = kept
        self.passive = passive

        # passive columns either vanish (a projected unique key identifies rows) or merge
        self.identity_size: dict[str, int] = {}
        for t in tables:
            if not passive[t]:
                continue
            keyed = any(
                (t, col) in proj_set and (t, col) in kept and self._unique_not_null(t, col) for col in schema.table(t).column_names
            )
            if keyed:
                self.identity_size[t] = 0
            else:
                space = 1
                for col in passive[t]:
                    space *= max(1, len(self._admissible(t, col, task.symbols)))
                self.identity_size[t] = min(task.symbols, space)

        # value families
        uf = _UF()
        fam_info: dict = {}
        terms = [("col", t, col) for (t, col) in sorted(kept)]
        for term in terms:
            uf.find(term)
        atoms = list(query_atoms(q)) + list(query_atoms(c))
        for a in atoms:
            if isinstance(a, Compare) and isinstance(a.left, ColumnRef):
                lt = ("col", a.left.table, a.left.column)
                if isinstance(a.right, ColumnRef):
                    uf.union(lt, ("col", a.right.table, a.right.column))
                elif isinstance(a.right, Param):
                    uf.union(lt, ("param", a.right.index))
            elif isinstance(a, Compare) and isinstance(a.left, CharLength) and isinstance(a.right, Param):
                uf.union(("col", a.left.col.table, a.left.col.column), ("param", a.right.index))
            elif isinstance(a, InList):
                for it in a.items:
                    if isinstance(it, Param):
                        uf.union(("col", a.col.table, a.col.column), ("param", it.index))
        for f in self.fks:
            uf.union(("col", f.table, f.column), ("col", f.kind.ref_table, f.kind.ref_column))

        def fam(term) -> _Family:
            root = uf.find(term)
            if root not in fam_info:
                fam_info[root] = _Family()
            return fam_info[root]

        for term in terms:
            fam(term).members.append(term)
            col = schema.column(term[1], term[2])
            f = fam(term)
            if col.type != "text" or f.col_type == "text":
                f.col_type = col.type if col.type != "enum" else "text"
            if col.type == "enum":
                f.anchors.extend(v for v in col.enum_values if v not in f.anchors)
            for con in cs.on_column(term[1], term[2]):
                k = con.kind
                if isinstance(k, Inclusion):
                    f.anchors.extend(v for v in k.values if v not in f.anchors)
                elif isinstance(k, Numerical) and col.type in NUMERIC_TYPES:
                    for b in (k.lower, k.upper):
                        if b is not None and b.value not in f.anchors:
                            f.anchors.append(b.value)
                    if k.equal is not None and k.equal not in f.anchors:
                        f.anchors.append(k.equal)
                elif isinstance(k, Length):
                    f.lengths.extend(x for x in (k.min, k.max) if x is not None)
                elif isinstance(k, Format):
                    if k.checkable_patterns:
                        f.formats.append(tuple((p.source, p.flags) for p in k.checkable_patterns))
            for u in self.unique_groups:
                cond = u.kind.condition
                if cond is not None and u.table == term[1] and cond.column == term[2]:
                    f.anchors.append(cond.value)
                    if cond.op not in ("=", "=="):
                        f.ordered = True
        all_params = sorted(set(params_of(q)) | set(params_of(c)))
        for p in all_params:
            fam(("param", p)).members.append(("param", p))
        for a in atoms:
            for o in _atom_literal_sites(a):
                col_ref, value, ordered, length = o
                f = fam(("col", col_ref.table, col_ref.column))
                if length:
                    if isinstance(value, int):
                        f.lengths.append(value)
                    f.ordered = f.ordered or ordered
                    continue
                if value is not None and value not in f.anchors:
                    f.anchors.append(value)
                f.ordered = f.ordered or ordered
            if isinstance(a, Compare) and a.op not in ("=", "<>"):
                if isinstance(a.left, ColumnRef):
                    fam(("col", a.left.table, a.left.column)).ordered = True
            if isinstance(a, Match):
                f = fam(("col", a.col.table, a.col.column))
                f.formats.append(((a.pattern, "i" if a.case_insensitive else ""),))
        self.families = fam_info
        self.uf = uf
        self.family_domain = {root: _family_domain(f, task.symbols) for root, f in fam_info.items()}

        # per-table row spaces
        self.spaces: list[_TableSpace] = []
        self.estimate = 1
        for t in tables:
            cols = [col for col in schema.table(t).column_names if (t, col) in kept]
            domains = [self._column_domain(t, col) for col in cols]
            if self.identity_size.get(t):
                cols.append(IDENTITY)
                domains.append(list(range(self.identity_size[t])))
            rows = list(itertools.product(*domains))
            count = sum(math.comb(len(rows) + k - 1, k) for k in range(bound + 1))
            self.estimate *= count
            self.spaces.append(_TableSpace(t, cols, domains, []))
        self.param_values = self._param_valuations(all_params)
        self.estimate *= max(1, len(self.param_values))
        self.reduced_schema = self._reduced_schema()
        self.original = self._reduce_query(q)
        self.candidate = self._reduce_query(c)

    # -- helpers --

    def _admissible(self, t: str, col: str, n: int) -> list:
        key = (t, col, n)
        if key not in self._admissible_cache:
            self._admissible_cache[key] = admissible_values(self.schema, self.task.cs, t, col, n)
        return self._admissible_cache[key]

    def _unique_not_null(self, t: str, col: str) -> bool:
        cdef = self.schema.column(t, col)
        unique = cdef.is_primary_key or any(
            u.columns == (col,) and not u.conditional for u in self.task.cs.on_table(t) if isinstance(u.kind, Uniqueness)
        )
        present = not cdef.nullable or any(isinstance(k.kind, Presence) for k in self.task.cs.on_column(t, col))
        return unique and present

    def _column_domain(self, t: str, col: str) -> list:
        cdef = self.schema.column(t, col)
        root = self.uf.find(("col", t, col))
        local = [
            k.kind
            for k in self.task.cs.on_column(t, col)
            if not isinstance(k.kind, (Presence, Uniqueness, ForeignKey))
        ]
        values = [v for v in self.family_domain[root] if all(value_admitted(k, v) for k in local)]
        if cdef.type == "enum":
            values = [v for v in values if v in cdef.enum_values]
        present = not cdef.nullable or any(isinstance(k.kind, Presence) for k in self.task.cs.on_column(t, col))
        if not present:
            values.append(None)
        return values

    def _param_valuations(self, params: list[int]) -> list[tuple]:
        if not params:
            return [()]
        choices = []
        for p in params:
            root = self.uf.find(("param", p))
            choices.append((root, self.family_domain[root]))
        out = []
        for combo in itertools.product(*[d for _, d in choices]):
            # symmetric families: parameters take values in first-occurrence order
            ok = True
            used: dict = {}
            for (root, dom), v in zip(choices, combo):
                if not self.families[root].symmetric:
                    continue
                seen = used.setdefault(root, [])
                if v not in seen:
                    if dom.index(v) != len(seen):
                        ok = False
                        break
                    seen.append(v)
            if ok:
                out.append(combo)
        return out

    def _reduced_schema(self) -> Schema:
        tables = []
        for sp in self.spaces:
            cols = []
            for name in sp.columns:
                if name == IDENTITY:
                    cols.append(ColumnDef(IDENTITY, "integer", False))
                else:
                    cdef = self.schema.column(sp.name, name)
                    cols.append(ColumnDef(cdef.name, cdef.type, cdef.nullable, cdef.is_primary_key, cdef.enum_values))
            tables.append(TableDef(sp.name, tuple(cols)))
        return Schema(tuple(tables))

    def _reduce_query(self, q: Query) -> Query:
        projections = []
        for p in q.projections:
            if isinstance(p, ColumnRef) and p.column in self.passive.get(p.table, ()):
                if self.identity_size.get(p.table):
                    projections.append(ColumnRef(p.table, IDENTITY))
                continue
            projections.append(p)
        return q.with_(projections=tuple(projections))

    # -- enumeration --

    def _table_multisets(self, sp: _TableSpace) -> list[list[tuple]]:
        if sp.by_size:
            return sp.by_size
        rows = list(itertools.product(*sp.domains))
        idx = {name: i for i, name in enumerate(sp.columns)}
        groups = []
        for u in self.unique_groups:
            if u.table == sp.name:
                cond = u.kind.condition
                groups.append(([idx[c] for c in u.columns], (idx[cond.column], cond.op, cond.value) if cond else None))
        for t, cols in self.pk_groups:
            if t == sp.name:
                groups.append(([idx[c] for c in cols], None))
        by_size: list[list[tuple]] = []
        for k in range(self.task.bound + 1):
            valid = []
            for combo in itertools.combinations_with_replacement(rows, k):
                if _unique_ok(combo, groups):
                    valid.append(combo)
            by_size.append(valid)
        sp.by_size = by_size
        return by_size

    def _fk_ok(self, tables: dict[str, tuple]) -> bool:
        for f in self.fks:
            child = next(s for s in self.spaces if s.name == f.table)
            parent = next(s for s in self.spaces if s.name == f.kind.ref_table)
            ci = child.columns.index(f.column)
            pi = parent.columns.index(f.kind.ref_column)
            targets = {r[pi] for r in tables[parent.name]}
            for r in tables[child.name]:
                v = r[ci]
                if v is not None and v not in targets:
                    return False
        return True

    def databases(self) -> Iterator[Database]:
        """Reduced databases in order of increasing total row count."""
        per_table = [self._table_multisets(sp) for sp in self.spaces]
        b = self.task.bound
        n = len(self.spaces)
        for total in range(b * n + 1):
            for sizes in _compositions(total, n, b):
                pools = [per_table[i][s] for i, s in enumerate(sizes)]
                if any(not p for p in pools):
                    continue
                for combo in itertools.product(*pools):
                    tables = {sp.name: rows for sp, rows in zip(self.spaces, combo)}
                    if self.fks and not self._fk_ok(tables):
                        continue
                    yield Database(self.reduced_schema, tables)


def _atom_literal_sites(a) -> Iterator[tuple]:
    """(column, literal, ordered?, is_length?) for each literal in the atom."""
    if isinstance(a, Compare):
        if isinstance(a.right, Lit):
            if isinstance(a.left, CharLength):
                yield a.left.col, a.right.value, a.op != "=", True
            else:
                yield a.left, a.right.value, a.op not in ("=", "<>"), False
    elif isinstance(a, InList):
        for it in a.items:
            if isinstance(it, Lit):
                yield a.col, it.value, False, False


def _unique_ok(rows: Sequence[tuple], groups) -> bool:
    for cols, cond in groups:
        seen = set()
        for r in rows:
            if cond is not None:
                ci, op, val = cond
                v = r[ci]
                if v is None or not _cond_holds(v, op, val):
                    continue
            key = tuple(r[i] for i in cols)
            if key in seen:
                return False
            seen.add(key)
    return True


def _cond_holds(v, op, val) -> bool:
    try:
        return {
            "=": v == val,
            "==": v == val,
            "<>": v != val,
            "!=": v != val,
            "<": v < val,
            "<=": v <= val,
            ">": v > val,
            ">=": v >= val,
        }[op]
    except TypeError:
        return False


def _compositions(total: int, parts: int, cap: int) -> Iterator[tuple[int, ...]]:
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(min(total, cap), -1, -1):
        for rest in _compositions(total - first, parts - 1, cap):
            yield (first,) + rest


# -- witness expansion -------------------------------------------------------------


class _Expander:
    """Turns a reduced witness into a full-schema database satisfying every constraint."""

    def __init__(self, space: InstanceSpace) -> None:
        self.space = space
        self.schema = space.schema
        self.cs = space.task.cs
        self.rows: dict[str, list[dict]] = {t.name: [] for t in self.schema.tables}

    def _present(self, t: str, col: str) -> bool:
        cdef = self.schema.column(t, col)
        return not cdef.nullable or any(isinstance(k.kind, Presence) for k in self.cs.on_column(t, col))

    def _fk_of(self, t: str, col: str):
        for k in self.cs.on_column(t, col):
            if isinstance(k.kind, ForeignKey):
                return k.kind
        return None

    def expand(self, db: Database) -> Database:
        sp = self.space
        for space in sp.spaces:
            t = space.name
            tdef = self.schema.table(t)
            ident = sp.identity_size.get(t)
            passive_vals = {}
            for col in sp.passive.get(t, ()):
                passive_vals[col] = self.space._admissible(t, col, max(1, sp.task.symbols))
            for i, r in enumerate(db.rows(t)):
                row: dict[str, Any] = dict(zip(space.columns, r))
                ident_val = row.pop(IDENTITY, None)
                for col in tdef.column_names:
                    if col in row:
                        continue
                    if col in passive_vals:
                        if ident and ident_val is not None:
                            # mixed-radix decode so distinct identities stay distinct
                            code = ident_val
                            for pc in sp.passive[t]:
                                pv = passive_vals[pc]
                                code, digit = divmod(code, max(1, len(pv)))
                                if pc == col:
                                    row[col] = pv[digit] if pv else None
                                    break
                        else:
                            row[col] = self._fill(t, col, i)
                    else:
                        row[col] = self._fill(t, col, i)
                self.rows[t].append(row)
        # enumerated FK columns may point at tables that were not enumerated
        for _ in range(len(self.schema.tables) + 1):
            if not self._add_missing_parents():
                break
        tables = {
            t.name: tuple(tuple(r.get(c) for c in t.column_names) for r in self.rows[t.name])
            for t in self.schema.tables
        }
        return Database(self.schema, tables)

    def _fill(self, t: str, col: str, i: int):
        fk = self._fk_of(t, col)
        if fk is not None:
            if not self._present(t, col):
                return None
            values = self.space._admissible(fk.ref_table, fk.ref_column, i + 1)
            return values[i] if i < len(values) else values[-1]
        vals = self.space._admissible(t, col, max(self.space.task.bound, i + 1))
        if not vals:
            return None
        return vals[i % len(vals)]

    def _add_missing_parents(self) -> bool:
        added = False
        for con in self.cs.of_kind(ForeignKey):
            fk = con.kind
            have = {r.get(fk.ref_column) for r in self.rows[fk.ref_table]}
            for r in list(self.rows[con.table]):
                v = r.get(con.column)
                if v is None or v in have:
                    continue
                tdef = self.schema.table(fk.ref_table)
                n = len(self.rows[fk.ref_table])
                new = {fk.ref_column: v}
                for c in tdef.column_names:
                    if c not in new:
                        new[c] = self._fill(fk.ref_table, c, n)
                self.rows[fk.ref_table].append(new)
                have.add(v)
                added = True
        return added


# -- entry points --------------------------------------------------------------


def _run(q: Query, params: Sequence, db: Database) -> list[tuple]:
    ground = instantiate(q, list(params)) if params_of(q) else q
    return compile_plan(ground, db.schema).run(db)


def _check_pair(mode: str, q: Query, c: Query, params: Sequence, db: Database):
    if mode in ("cardinality", "unlimited"):
        q, c = _strip_limit(q), _strip_limit(c)
    o = _run(q, params, db)
    r = _run(c, params, db)
    return results_differ(mode, o, r), o, r


def _param_tuple(space: InstanceSpace, values: tuple) -> tuple:
    params = sorted(set(params_of(space.task.original)) | set(params_of(space.task.candidate)))
    full = [None] * (max(params) if params else 0)
    for p, v in zip(params, values):
        full[p - 1] = v
    return tuple(full)


def verify_equivalence(task: VerificationTask) -> Verdict:
    try:
        space = InstanceSpace(task)
    except (KeyError, ValueError) as exc:
        return Skipped(f"unsupported: {exc}")
    if space.estimate > task.ceiling:
        return Skipped("too-large", space.estimate)
    mode = comparison_mode(task.original, task.candidate)
    q, c = space.original, space.candidate
    if mode in ("cardinality", "unlimited"):
        q, c = _strip_limit(q), _strip_limit(c)
    valuations = []
    for values in space.param_values:
        params = _param_tuple(space, values)
        qg = instantiate(q, list(params)) if params_of(q) else q
        cg = instantiate(c, list(params)) if params_of(c) else c
        valuations.append((params, compile_plan(qg, space.reduced_schema), compile_plan(cg, space.reduced_schema)))
    checked = 0
    for db in space.databases():
        for params, qp, cp in valuations:
            checked += 1
            o = qp.run(db)
            r = cp.run(db)
            reason = results_differ(mode, o, r)
            if reason is None:
                continue
            witness = _Expander(space).expand(db)
            if not all_hold(task.cs, witness.as_dicts()):
                return Skipped("counterexample could not be extended to the full schema")
            replay, full_o, full_r = _check_pair(mode, task.original, task.candidate, params, witness)
            if replay is None:
                return Skipped("counterexample did not replay on the full schema")
            return NotEquivalent(witness, tuple(params), tuple(full_o), tuple(full_r), replay, checked)
    return EquivalentUpToBound(task.bound, checked)


def replay_counterexample(verdict: NotEquivalent, original: Query, candidate: Query) -> str | None:
    """Re-run both queries on the witness; returns the disagreement reason or None."""
    mode = comparison_mode(original, candidate)
    reason, _, _ = _check_pair(mode, original, candidate, verdict.params, verdict.database)
    return reason


@dataclass
class BatchResult:
    chosen: Any | None
    verdicts: list[tuple[Any, Verdict]]


def verify_batch(original: Query, candidates: Sequence, cs: ConstraintSet, schema: Schema, **task_options) -> BatchResult:
    """Try candidates cheapest first; stop at the first one proved equivalent.

    ``candidates`` are objects with ``template`` and ``est_cost`` attributes.
    """
    ordered = sorted(
        enumerate(candidates),
        key=lambda ic: (ic[1].est_cost if ic[1].est_cost is not None else math.inf, ic[0]),
    )
    verdicts = []
    for _, cand in ordered:
        v = verify_equivalence(VerificationTask(original, cand.template, cs, schema, **task_options))
        verdicts.append((cand, v))
        if isinstance(v, EquivalentUpToBound):
            return BatchResult(cand, verdicts)
    return BatchResult(None, verdicts)
