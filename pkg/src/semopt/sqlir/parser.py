"""Recursive-descent parser for the supported SELECT subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ir import (
    FLIPPED,
    And,
    CharLength,
    ColumnRef,
    Compare,
    Const,
    CountStar,
    Expr,
    InList,
    IsNull,
    Join,
    Lit,
    Match,
    Not,
    Or,
    OrderItem,
    Param,
    Query,
    Star,
)


class UnsupportedQuery(ValueError):
    def __init__(self, position: int, construct: str) -> None:
        super().__init__(f"unsupported construct at {position}: {construct}")
        self.position = position
        self.construct = construct


@dataclass(frozen=True)
class Token:
    kind: str  # ident | qident | number | string | param | op | kw | end
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper()


KEYWORDS = {
    "SELECT", "DISTINCT", "FROM", "WHERE", "AND", "OR", "NOT", "IN", "IS", "NULL",
    "TRUE", "FALSE", "INNER", "LEFT", "OUTER", "JOIN", "ON", "GROUP", "ORDER", "BY",
    "ASC", "DESC", "LIMIT", "HAVING", "COUNT", "AS", "OFFSET", "UNION", "EXISTS",
    "RIGHT", "FULL", "CROSS", "LIKE", "BETWEEN", "CASE", "WITH",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<qident>"(?:[^"]|"")*")
  | (?P<string>'(?:[^']|'')*')
  | (?P<param>\$\d+)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><>|!=|<=|>=|~\*|[=<>~(),.*;])
    """,
    re.VERBOSE,
)


def tokenize(sql: str) -> list[Token]:
    out: list[Token] = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise UnsupportedQuery(pos, f"character {sql[pos]!r}")
        kind = m.lastgroup
        text = m.group()
        if kind == "ident" and text.upper() in KEYWORDS:
            kind = "kw"
        if kind == "number" and text.startswith("-") and out and (
            out[-1].kind in ("ident", "qident", "number", "string", "param")
            or out[-1].text == ")"
        ):
            raise UnsupportedQuery(pos, "arithmetic")
        if kind != "ws":
            out.append(Token(kind, text, pos))
        pos = m.end()
    out.append(Token("end", "", len(sql)))
    return out


def _number(text: str) -> int | float:
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return float(text)


class _Parser:
    def __init__(self, sql: str) -> None:
        self.toks = tokenize(sql)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at_kw(self, *words: str) -> bool:
        return self.tok.kind == "kw" and self.tok.upper in words

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def expect_kw(self, word: str) -> None:
        if not self.at_kw(word):
            self.fail(f"expected {word}")
        self.advance()

    def expect_op(self, op: str) -> None:
        if not self.at_op(op):
            self.fail(f"expected {op!r}")
        self.advance()

    def fail(self, what: str):
        t = self.tok
        found = t.text or "end of input"
        raise UnsupportedQuery(t.pos, f"{what}, found {found!r}")

    def ident(self) -> str:
        t = self.tok
        if t.kind == "ident":
            self.advance()
            return t.text
        if t.kind == "qident":
            self.advance()
            return t.text[1:-1].replace('""', '"')
        self.fail("expected identifier")

    def at_ident(self) -> bool:
        return self.tok.kind in ("ident", "qident")

    # grammar
    def query(self) -> Query:
        self.expect_kw("SELECT")
        distinct = False
        if self.at_kw("DISTINCT"):
            self.advance()
            distinct = True
        projections = [self.projection()]
        while self.at_op(","):
            self.advance()
            projections.append(self.projection())
        self.expect_kw("FROM")
        from_table = self.table_name()
        joins = []
        while self.at_kw("INNER", "JOIN", "LEFT"):
            joins.append(self.join())
        if self.at_op(","):
            self.fail("implicit cross join")
        where = None
        if self.at_kw("WHERE"):
            self.advance()
            where = self.or_expr()
        group_by: list[ColumnRef] = []
        having = None
        if self.at_kw("GROUP"):
            self.advance()
            self.expect_kw("BY")
            group_by.append(self.colref())
            while self.at_op(","):
                self.advance()
                group_by.append(self.colref())
            if self.at_kw("HAVING"):
                self.advance()
                self.count_star()
                self.expect_op(">")
                if self.tok.kind != "number" or not re.fullmatch(r"\d+", self.tok.text):
                    self.fail("expected integer after HAVING COUNT(*) >")
                having = int(self.advance().text)
        order_by: list[OrderItem] = []
        if self.at_kw("ORDER"):
            self.advance()
            self.expect_kw("BY")
            order_by.append(self.order_item())
            while self.at_op(","):
                self.advance()
                order_by.append(self.order_item())
        limit = None
        if self.at_kw("LIMIT"):
            self.advance()
            if self.tok.kind != "number" or not re.fullmatch(r"\d+", self.tok.text):
                self.fail("expected integer LIMIT")
            limit = int(self.advance().text)
        if self.at_op(";"):
            self.advance()
        if self.tok.kind != "end":
            self.fail("unexpected trailing input")
        return Query(
            projections=tuple(projections),
            from_table=from_table,
            joins=tuple(joins),
            where=where,
            distinct=distinct,
            group_by=tuple(group_by),
            having_count_gt=having,
            order_by=tuple(order_by),
            limit=limit,
        )

    def table_name(self) -> str:
        if self.at_op("("):
            self.fail("subquery")
        name = self.ident()
        if self.at_kw("AS") or self.at_ident():
            self.fail("table alias")
        return name

    def count_star(self) -> None:
        self.expect_kw("COUNT")
        self.expect_op("(")
        self.expect_op("*")
        self.expect_op(")")

    def projection(self):
        if self.at_op("*"):
            self.advance()
            return Star()
        if self.at_kw("COUNT"):
            self.count_star()
            return CountStar()
        if not self.at_ident():
            self.fail("expected projection")
        first = self.ident()
        if self.at_op("("):
            self.fail(f"function {first}")
        if self.at_op("."):
            self.advance()
            if self.at_op("*"):
                self.advance()
                return Star(first)
            ref = ColumnRef(first, self.ident())
        else:
            ref = ColumnRef(None, first)
        if self.at_kw("AS") or self.at_ident():
            self.fail("column alias")
        return ref

    def join(self) -> Join:
        kind = "INNER"
        if self.at_kw("LEFT"):
            self.advance()
            if self.at_kw("OUTER"):
                self.advance()
            kind = "LEFT"
        elif self.at_kw("INNER"):
            self.advance()
        self.expect_kw("JOIN")
        table = self.table_name()
        self.expect_kw("ON")
        paren = self.at_op("(")
        if paren:
            self.advance()
        left = self.colref()
        self.expect_op("=")
        right = self.colref()
        if paren:
            self.expect_op(")")
        if self.at_kw("AND", "OR"):
            self.fail("compound join condition")
        return Join(table, Compare(left, "=", right), kind)

    def colref(self) -> ColumnRef:
        first = self.ident()
        if self.at_op("."):
            self.advance()
            return ColumnRef(first, self.ident())
        return ColumnRef(None, first)

    def order_item(self) -> OrderItem:
        col = self.colref()
        desc = False
        if self.at_kw("ASC", "DESC"):
            desc = self.advance().upper == "DESC"
        return OrderItem(col, desc)

    def or_expr(self) -> Expr:
        items = [self.and_expr()]
        while self.at_kw("OR"):
            self.advance()
            items.append(self.and_expr())
        return _flatten(Or, items)

    def and_expr(self) -> Expr:
        items = [self.not_expr()]
        while self.at_kw("AND"):
            self.advance()
            items.append(self.not_expr())
        return _flatten(And, items)

    def not_expr(self) -> Expr:
        if self.at_kw("NOT"):
            self.advance()
            return Not(self.not_expr())
        if self.at_kw("EXISTS"):
            self.fail("subquery")
        if self.at_op("("):
            self.advance()
            if self.at_kw("SELECT"):
                self.fail("subquery")
            e = self.or_expr()
            self.expect_op(")")
            return e
        if self.at_kw("TRUE", "FALSE"):
            return Const(self.advance().upper == "TRUE")
        return self.atom()

    def operand(self):
        t = self.tok
        if t.kind == "param":
            self.advance()
            return Param(int(t.text[1:]))
        if t.kind == "number":
            self.advance()
            return Lit(_number(t.text))
        if t.kind == "string":
            self.advance()
            return Lit(t.text[1:-1].replace("''", "'"))
        if self.at_kw("TRUE", "FALSE"):
            return Lit(self.advance().upper == "TRUE")
        if self.at_kw("NULL"):
            self.fail("NULL comparison")
        if self.at_ident():
            if t.kind == "ident" and t.text.lower() == "char_length" and self.toks[self.i + 1].text == "(":
                self.advance()
                self.expect_op("(")
                col = self.colref()
                self.expect_op(")")
                return CharLength(col)
            if self.toks[self.i + 1].text == "(":
                self.fail(f"function {t.text}")
            return self.colref()
        if self.at_op("("):
            self.fail("subquery or nested expression")
        self.fail("expected operand")

    def atom(self) -> Expr:
        left = self.operand()
        if self.at_kw("IS"):
            self.advance()
            negated = False
            if self.at_kw("NOT"):
                self.advance()
                negated = True
            self.expect_kw("NULL")
            if not isinstance(left, ColumnRef):
                self.fail("IS NULL on non-column")
            return IsNull(left, negated)
        if self.at_kw("NOT"):
            self.advance()
            if not self.at_kw("IN"):
                self.fail("expected IN after NOT")
            return Not(self._in_list(left))
        if self.at_kw("IN"):
            return self._in_list(left)
        if self.at_kw("LIKE", "BETWEEN"):
            self.fail(self.tok.upper)
        if self.at_op("~", "~*"):
            ci = self.advance().text == "~*"
            if self.tok.kind != "string" or not isinstance(left, ColumnRef):
                self.fail("regular-expression match needs column and string literal")
            return Match(left, self.advance().text[1:-1].replace("''", "'"), ci)
        if not self.at_op("=", "<>", "!=", "<", "<=", ">", ">="):
            self.fail("expected comparison operator")
        op = self.advance().text
        if op == "!=":
            op = "<>"
        right = self.operand()
        if isinstance(left, (Lit, Param)):
            if isinstance(right, (Lit, Param)):
                self.fail("comparison without a column")
            left, right, op = right, left, FLIPPED[op]
        return Compare(left, op, right)

    def _in_list(self, left) -> InList:
        self.expect_kw("IN")
        if not isinstance(left, ColumnRef):
            self.fail("IN on non-column")
        self.expect_op("(")
        if self.at_kw("SELECT"):
            self.fail("subquery")
        items = [self.operand()]
        while self.at_op(","):
            self.advance()
            items.append(self.operand())
        self.expect_op(")")
        for it in items:
            if not isinstance(it, (Lit, Param)):
                self.fail("IN list must hold literals or parameters")
        return InList(left, tuple(items))


def _flatten(cls, items):
    if len(items) == 1:
        return items[0]
    flat = []
    for it in items:
        flat.extend(it.items if isinstance(it, cls) else (it,))
    return cls(tuple(flat))


def parse_query(sql: str) -> Query:
    """Parse SQL text into an unresolved :class:`Query`."""
    return _Parser(sql).query()
