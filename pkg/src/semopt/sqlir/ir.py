"""Immutable query IR.

A query is a single SELECT block. Predicates are trees of ``And``/``Or``/``Not``
over atoms; operands are column references, literals or ordinal parameters.
``Not``, ``CharLength``, ``Match`` and LEFT joins exist for the checker-SQL
dialect; the rewriter treats them as opaque.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Union

COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=")
FLIPPED = {"=": "=", "<>": "<>", "<": ">", "<=": ">=", ">": "<", ">=": "<="}
NEGATED = {"=": "<>", "<>": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


@dataclass(frozen=True)
class ColumnRef:
    table: str | None
    column: str

    def __str__(self) -> str:
        return f"{self.table}.{self.column}" if self.table else self.column

    @property
    def key(self) -> tuple[str, str]:
        return (self.table or "", self.column)


@dataclass(frozen=True)
class Lit:
    value: str | int | float | bool | None


@dataclass(frozen=True)
class Param:
    index: int  # 1-based ordinal


@dataclass(frozen=True)
class CharLength:
    col: ColumnRef


Operand = Union[ColumnRef, Lit, Param, CharLength]


@dataclass(frozen=True)
class Compare:
    left: ColumnRef | CharLength
    op: str
    right: Operand


@dataclass(frozen=True)
class InList:
    col: ColumnRef
    items: tuple[Lit | Param, ...]


@dataclass(frozen=True)
class IsNull:
    col: ColumnRef
    negated: bool = False  # IS NOT NULL


@dataclass(frozen=True)
class Match:
    """POSIX regular-expression match ``col ~ 'pattern'`` (``~*`` when case-insensitive)."""

    col: ColumnRef
    pattern: str
    case_insensitive: bool = False


@dataclass(frozen=True)
class Const:
    value: bool


TRUE = Const(True)
FALSE = Const(False)

Atom = Union[Compare, InList, IsNull, Match, Const]


@dataclass(frozen=True)
class And:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Not:
    item: "Expr"


Expr = Union[Atom, And, Or, Not]


@dataclass(frozen=True)
class Star:
    table: str | None = None


@dataclass(frozen=True)
class CountStar:
    pass


Projection = Union[Star, ColumnRef, CountStar]


@dataclass(frozen=True)
class Join:
    table: str
    on: Compare
    kind: str = "INNER"


@dataclass(frozen=True)
class OrderItem:
    col: ColumnRef
    descending: bool = False


@dataclass(frozen=True)
class Query:
    projections: tuple[Projection, ...]
    from_table: str
    joins: tuple[Join, ...] = ()
    where: Expr | None = None
    distinct: bool = False
    group_by: tuple[ColumnRef, ...] = ()
    having_count_gt: int | None = None
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None
    # column types of parameters, filled in by resolution
    param_types: tuple[tuple[int, str], ...] = field(default=(), compare=False)

    @property
    def tables(self) -> tuple[str, ...]:
        return (self.from_table,) + tuple(j.table for j in self.joins)

    @property
    def has_count(self) -> bool:
        return any(isinstance(p, CountStar) for p in self.projections)

    @property
    def is_aggregate(self) -> bool:
        return self.has_count or bool(self.group_by)

    def param_type(self, index: int) -> str | None:
        return dict(self.param_types).get(index)

    def with_(self, **changes) -> "Query":
        return replace(self, **changes)


# -- traversal helpers -------------------------------------------------------


def iter_atoms(e: Expr | None) -> Iterator[Atom]:
    if e is None:
        return
    if isinstance(e, (And, Or)):
        for item in e.items:
            yield from iter_atoms(item)
    elif isinstance(e, Not):
        yield from iter_atoms(e.item)
    else:
        yield e


def atom_columns(a: Atom) -> Iterator[ColumnRef]:
    if isinstance(a, Compare):
        yield a.left.col if isinstance(a.left, CharLength) else a.left
        if isinstance(a.right, ColumnRef):
            yield a.right
        elif isinstance(a.right, CharLength):
            yield a.right.col
    elif isinstance(a, (InList, IsNull, Match)):
        yield a.col


def atom_operands(a: Atom) -> Iterator[Operand]:
    if isinstance(a, Compare):
        yield a.left
        yield a.right
    elif isinstance(a, InList):
        yield a.col
        yield from a.items
    elif isinstance(a, (IsNull, Match)):
        yield a.col


def params_of(q: Query) -> list[int]:
    """Parameter ordinals in order of first appearance."""
    seen: list[int] = []
    for a in query_atoms(q):
        for o in atom_operands(a):
            if isinstance(o, Param) and o.index not in seen:
                seen.append(o.index)
    return seen


def query_atoms(q: Query) -> Iterator[Atom]:
    for j in q.joins:
        yield j.on
    yield from iter_atoms(q.where)


def map_operands(e: Expr | None, fn) -> Expr | None:
    """Rebuild ``e`` with every non-column operand replaced by ``fn(operand)``."""
    if e is None:
        return None
    if isinstance(e, And):
        return And(tuple(map_operands(i, fn) for i in e.items))
    if isinstance(e, Or):
        return Or(tuple(map_operands(i, fn) for i in e.items))
    if isinstance(e, Not):
        return Not(map_operands(e.item, fn))
    if isinstance(e, Compare) and isinstance(e.right, (Lit, Param)):
        return Compare(e.left, e.op, fn(e.right))
    if isinstance(e, InList):
        return InList(e.col, tuple(fn(i) for i in e.items))
    return e


def map_columns(e: Expr | None, fn) -> Expr | None:
    if e is None:
        return None
    if isinstance(e, And):
        return And(tuple(map_columns(i, fn) for i in e.items))
    if isinstance(e, Or):
        return Or(tuple(map_columns(i, fn) for i in e.items))
    if isinstance(e, Not):
        return Not(map_columns(e.item, fn))

    def col(o):
        if isinstance(o, ColumnRef):
            return fn(o)
        if isinstance(o, CharLength):
            return CharLength(fn(o.col))
        return o

    if isinstance(e, Compare):
        return Compare(col(e.left), e.op, col(e.right))
    if isinstance(e, InList):
        return InList(fn(e.col), e.items)
    if isinstance(e, IsNull):
        return IsNull(fn(e.col), e.negated)
    if isinstance(e, Match):
        return Match(fn(e.col), e.pattern, e.case_insensitive)
    return e


def conjuncts(e: Expr | None) -> tuple[Expr, ...]:
    if e is None:
        return ()
    if isinstance(e, And):
        return e.items
    return (e,)


def make_and(items) -> Expr | None:
    """Conjunction with flattening and TRUE/FALSE simplification."""
    flat: list[Expr] = []
    for i in items:
        if i is None or i == TRUE:
            continue
        if i == FALSE:
            return FALSE
        flat.extend(i.items if isinstance(i, And) else (i,))
    if not flat:
        return None
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def make_or(items) -> Expr | None:
    flat: list[Expr] = []
    for i in items:
        if i is None or i == TRUE:
            return None  # an absent WHERE is TRUE
        if i == FALSE:
            continue
        flat.extend(i.items if isinstance(i, Or) else (i,))
    if not flat:
        return FALSE
    return flat[0] if len(flat) == 1 else Or(tuple(flat))


def simplify(e: Expr | None) -> Expr | None:
    """Propagate TRUE/FALSE constants; ``None`` stands for an absent (true) predicate."""
    if e is None:
        return None
    if isinstance(e, And):
        return make_and(simplify(i) if i is not None else None for i in e.items)
    if isinstance(e, Or):
        parts = [simplify(i) for i in e.items]
        return make_or(parts)
    if isinstance(e, Not):
        inner = simplify(e.item)
        if inner is None or inner == TRUE:
            return FALSE
        if inner == FALSE:
            return None
        return Not(inner)
    if e == TRUE:
        return None
    return e
