"""Conditions of custom validations and their negation into constraints.

Only the small grammar below is recognised; anything else parses to None
and the enclosing validation counts as missed::

    cond    := and ("||" and)*
    and     := unary ("&&" unary)*
    unary   := "!" unary | "(" cond ")" | expr
    expr    := operand binop operand | operand        (operand must be an api call)
    operand := api "(" operand ")" | atom ("." api)*
    binop   := > | >= | < | <= | ==
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..constraints import Bound, Length, Numerical, Presence
from .ast import ApiCall, BinOp, BoolOp, Call, CondExpr, Const, Field, NotCond, Operand

API_CALLS = ("length", "size", "nil?", "empty?", "blank?", "none?", "any?", "exists?", "to_s", "to_i", "to_f")
BINOPS = (">=", "<=", "==", ">", "<")
_FLIP = {">": "<", "<": ">", ">=": "<=", "<=": ">=", "==": "=="}

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>-?\d+(?:\.\d+)?)
      | (?P<str>'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*")
      | (?P<sym>:[A-Za-z_]\w*)
      | (?P<op>&&|\|\||>=|<=|==|!=|[<>!().,])
      | (?P<name>@?[A-Za-z_]\w*[?!]?)
    )""",
    re.VERBOSE,
)


class _Fail(Exception):
    pass


def _tokenize(text: str) -> list[tuple[str, str]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise _Fail(text[pos:])
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    return out


class _CondParser:
    def __init__(self, tokens: list[tuple[str, str]]) -> None:
        self.toks = tokens
        self.i = 0

    def peek(self) -> tuple[str, str] | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, value: str | None = None) -> tuple[str, str]:
        t = self.peek()
        if t is None or (value is not None and t[1] != value):
            raise _Fail(value)
        self.i += 1
        return t

    def accept(self, *values: str) -> str | None:
        t = self.peek()
        if t is not None and t[1] in values:
            self.i += 1
            return t[1]
        return None

    def cond(self) -> CondExpr:
        items = [self.conj()]
        while self.accept("||", "or"):
            items.append(self.conj())
        return items[0] if len(items) == 1 else BoolOp("||", tuple(items))

    def conj(self) -> CondExpr:
        items = [self.unary()]
        while self.accept("&&", "and"):
            items.append(self.unary())
        return items[0] if len(items) == 1 else BoolOp("&&", tuple(items))

    def unary(self) -> CondExpr:
        if self.accept("!", "not"):
            return NotCond(self.unary())
        if self.peek() == ("op", "("):
            save = self.i
            self.take("(")
            try:
                inner = self.cond()
                self.take(")")
                return inner
            except _Fail:
                self.i = save  # maybe a parenthesised operand
        return self.expr()

    def expr(self) -> CondExpr:
        left = self.operand()
        op = self.accept(*BINOPS)
        if op is None:
            if isinstance(left, ApiCall):
                return Call(left.api, left.arg)
            raise _Fail("bare operand")
        return BinOp(op, left, self.operand())

    def operand(self) -> Operand:
        t = self.peek()
        if t is None:
            raise _Fail("operand")
        kind, text = t
        if kind == "num":
            self.i += 1
            base: Operand = Const(float(text) if "." in text else int(text))
        elif kind == "str":
            self.i += 1
            base = Const(text[1:-1])
        elif kind == "sym":
            self.i += 1
            base = Const(text[1:])
        elif kind == "name":
            self.i += 1
            name = text.lstrip("@")
            if name in ("nil", "true", "false"):
                base = Const({"nil": None, "true": True, "false": False}[name])
            elif name == "self" and self.accept("."):
                base = Field(self.take()[1])
            elif self.peek() == ("op", "("):
                if name not in API_CALLS:
                    raise _Fail(name)
                self.take("(")
                arg = self.operand()
                self.take(")")
                base = ApiCall(name, arg)
            else:
                base = Field(name)
        elif text == "(":
            self.take("(")
            base = self.operand()
            self.take(")")
        else:
            raise _Fail(text)
        while self.peek() == ("op", "."):
            self.take(".")
            api = self.take()[1]
            if api not in API_CALLS:
                raise _Fail(api)
            base = ApiCall(api, base)
        return base


def parse_condition(text: str) -> CondExpr | None:
    try:
        p = _CondParser(_tokenize(text))
        c = p.cond()
        if p.peek() is not None:
            return None
        return c
    except _Fail:
        return None


def condition_fields(c: CondExpr) -> list[str]:
    out: list[str] = []

    def op(o: Operand) -> None:
        if isinstance(o, Field):
            out.append(o.name)
        elif isinstance(o, ApiCall):
            op(o.arg)

    def walk(e: CondExpr) -> None:
        if isinstance(e, BinOp):
            op(e.left)
            op(e.right)
        elif isinstance(e, Call):
            op(e.arg)
        elif isinstance(e, NotCond):
            walk(e.item)
        elif isinstance(e, BoolOp):
            for it in e.items:
                walk(it)

    walk(c)
    return out


# -- negation -------------------------------------------------------------------------


@dataclass(frozen=True)
class Derived:
    field: str
    kind: object


def _strip_conversions(o: Operand) -> Operand:
    while isinstance(o, ApiCall) and o.api in ("to_i", "to_f", "to_s"):
        o = o.arg
    return o


def _negate_atom(e: CondExpr) -> list[Derived] | None:
    """Constraints implied by ``not e``, or None when no single kind fits."""
    if isinstance(e, Call):
        arg = _strip_conversions(e.arg)
        if not isinstance(arg, Field):
            return None
        if e.api == "nil?":
            return [Derived(arg.name, Presence())]
        if e.api == "blank?":
            return [Derived(arg.name, Presence()), Derived(arg.name, Length(min=1))]
        if e.api == "empty?":
            return [Derived(arg.name, Length(min=1))]
        return None
    if isinstance(e, BinOp):
        left, op, right = e.left, e.op, e.right
        if isinstance(left, Const) and not isinstance(right, Const):
            left, op, right = right, _FLIP[op], left
        if not isinstance(right, Const) or isinstance(right.value, bool) or right.value is None:
            return None
        c = right.value
        if op == "==":
            return None
        if isinstance(left, ApiCall) and left.api in ("length", "size"):
            target = _strip_conversions(left.arg)
            if not isinstance(target, Field) or not isinstance(c, int):
                return None
            length = {
                ">": Length(max=c),
                ">=": Length(max=c - 1),
                "<": Length(min=c),
                "<=": Length(min=c + 1),
            }[op]
            if length.max is not None and length.max < 0:
                return None
            return [Derived(target.name, length)]
        target = _strip_conversions(left)
        if not isinstance(target, Field) or not isinstance(c, (int, float)):
            return None
        num = {
            ">": Numerical(upper=Bound(c, True)),
            ">=": Numerical(upper=Bound(c, False)),
            "<": Numerical(lower=Bound(c, True)),
            "<=": Numerical(lower=Bound(c, False)),
        }[op]
        return [Derived(target.name, num)]
    return None


@dataclass
class Negation:
    derived: list[Derived]
    missed: int  # disjuncts that produced nothing


def negate(cond: CondExpr | None) -> Negation:
    """Negate an error-branch condition into constraints.

    ``not (a || b)`` splits into the negations of ``a`` and ``b``; each part
    that normalizes is kept on its own. A conjunction negates to a
    disjunction, which no single constraint captures.
    """
    if cond is None:
        return Negation([], 1)
    parts = cond.items if isinstance(cond, BoolOp) and cond.op == "||" else (cond,)
    derived: list[Derived] = []
    missed = 0
    for p in parts:
        got = _negate_atom(p)
        if got is None:
            missed += 1
        else:
            derived.extend(got)
    return Negation(derived, missed)
