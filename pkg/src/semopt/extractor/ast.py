"""AST for the restricted model-file grammar (see docs/model_grammar.md)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Union


# -- literal values ---------------------------------------------------------------


@dataclass(frozen=True)
class Symbol:
    name: str


@dataclass(frozen=True)
class Ident:
    """A bare identifier or constant path such as ``project`` or ``ActiveRecord::Base``."""

    name: str


@dataclass(frozen=True)
class Regex:
    source: str
    flags: str = ""


@dataclass(frozen=True)
class RangeLit:
    low: Any
    high: Any
    exclusive: bool = False


@dataclass(frozen=True)
class Lambda:
    body: str


@dataclass(frozen=True)
class Expr:
    """Anything that is not a literal: method calls, arithmetic, interpolation."""

    text: str


Value = Union[str, int, float, bool, None, Symbol, Ident, Regex, RangeLit, Lambda, Expr, list, dict]


def is_literal(v: Any) -> bool:
    """Plain data: strings, numbers, booleans, symbols and containers of them."""
    if isinstance(v, (Expr, Lambda, Ident)):
        return False
    if isinstance(v, list):
        return all(is_literal(x) for x in v)
    if isinstance(v, dict):
        return all(is_literal(x) for x in v.values())
    return True


def scalar(v: Any) -> Any:
    """Symbols and identifiers collapse to their names."""
    if isinstance(v, (Symbol, Ident)):
        return v.name
    return v


# -- custom-validation conditions -------------------------------------------------


@dataclass(frozen=True)
class Field:
    name: str


@dataclass(frozen=True)
class Const:
    value: Any


@dataclass(frozen=True)
class ApiCall:
    api: str
    arg: "Operand"


Operand = Union[Field, Const, ApiCall]


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Operand
    right: Operand


@dataclass(frozen=True)
class Call:
    """``api_call(a)`` used as a boolean expression."""

    api: str
    arg: Operand


@dataclass(frozen=True)
class NotCond:
    item: "CondExpr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # "&&" or "||"
    items: tuple["CondExpr", ...]


CondExpr = Union[BinOp, Call, NotCond, BoolOp]


# -- statements -------------------------------------------------------------------


@dataclass
class Node:
    line: int

    def children(self) -> Iterator["Node"]:
        return iter(())


@dataclass
class BuiltinValidation(Node):
    api: str  # validates_presence_of, ..., or plain "validates"
    fields: list[str]
    options: dict[str, Any]


@dataclass
class CustomValidatorRegistration(Node):
    method: str


@dataclass
class ErrorAdd(Node):
    message: str | None = None


@dataclass
class IfStmt(Node):
    cond: CondExpr | None  # None when the condition is outside the grammar
    text: str
    body: list[Node] = field(default_factory=list)
    orelse: list[Node] = field(default_factory=list)

    def children(self) -> Iterator[Node]:
        yield from self.body
        yield from self.orelse


@dataclass
class MethodDef(Node):
    name: str
    body: list[Node] = field(default_factory=list)

    def children(self) -> Iterator[Node]:
        return iter(self.body)


@dataclass
class Association(Node):
    kind: str  # belongs_to, has_one, has_many
    target: str
    options: dict[str, Any]
    scope: Lambda | None = None


@dataclass
class Transition(Node):
    sources: list[Any]
    target: Any


@dataclass
class Event(Node):
    name: str
    transitions: list[Transition] = field(default_factory=list)

    def children(self) -> Iterator[Node]:
        return iter(self.transitions)


@dataclass
class StateMachineBlock(Node):
    field: str
    initial: Any
    events: list[Event] = field(default_factory=list)

    def children(self) -> Iterator[Node]:
        return iter(self.events)


@dataclass
class Setting(Node):
    """``self.table_name = ...``, ``self.inheritance_column = ...``, ``self.abstract_class = ...``."""

    name: str
    value: Any


@dataclass
class Opaque(Node):
    text: str
    body: list[Node] = field(default_factory=list)

    def children(self) -> Iterator[Node]:
        return iter(self.body)


@dataclass
class ClassDef(Node):
    name: str
    superclass: str | None
    file: str
    statements: list[Node] = field(default_factory=list)

    def children(self) -> Iterator[Node]:
        return iter(self.statements)


@dataclass
class ModelAst:
    classes: list[ClassDef] = field(default_factory=list)
    opaque: int = 0

    def walk(self) -> Iterator[Node]:
        stack: list[Node] = list(reversed(self.classes))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(list(node.children())))

    @property
    def node_count(self) -> int:
        return sum(1 for _ in self.walk())

    def by_name(self) -> dict[str, ClassDef]:
        return {c.name: c for c in self.classes}
