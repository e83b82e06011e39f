"""Canonical SQL rendering.

Keywords are uppercase, tokens separated by single spaces, and parentheses
appear only where precedence needs them (an OR nested in an AND, or any
compound under NOT).
"""

from __future__ import annotations

from .ir import (
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


def render_literal(v) -> str:
    if v is None:
        return "NULL"
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return "'" + str(v).replace("'", "''") + "'"


def render_operand(o, slot=None) -> str:
    if isinstance(o, ColumnRef):
        return str(o)
    if isinstance(o, CharLength):
        return f"char_length({o.col})"
    if slot is not None:
        return slot(o)
    if isinstance(o, Param):
        return f"${o.index}"
    if isinstance(o, Lit):
        return render_literal(o.value)
    raise TypeError(o)


def render_expr(e: Expr, slot=None, parent: str = "") -> str:
    if isinstance(e, And):
        text = " AND ".join(render_expr(i, slot, "AND") for i in e.items)
        return f"({text})" if parent == "NOT" else text
    if isinstance(e, Or):
        text = " OR ".join(render_expr(i, slot, "OR") for i in e.items)
        return f"({text})" if parent in ("AND", "NOT") else text
    if isinstance(e, Not):
        inner = render_expr(e.item, slot, "NOT")
        if not inner.startswith("("):
            inner = f"({inner})"
        return f"NOT {inner}"
    if isinstance(e, Const):
        return "TRUE" if e.value else "FALSE"
    if isinstance(e, Compare):
        return f"{render_operand(e.left)} {e.op} {render_operand(e.right, slot)}"
    if isinstance(e, InList):
        items = ", ".join(render_operand(i, slot) for i in e.items)
        return f"{e.col} IN ({items})"
    if isinstance(e, IsNull):
        return f"{e.col} IS {'NOT ' if e.negated else ''}NULL"
    if isinstance(e, Match):
        op = "~*" if e.case_insensitive else "~"
        return f"{e.col} {op} {render_literal(e.pattern)}"
    raise TypeError(e)


def render_projection(p) -> str:
    if isinstance(p, Star):
        return f"{p.table}.*" if p.table else "*"
    if isinstance(p, CountStar):
        return "COUNT(*)"
    return str(p)


def render(q: Query, slot=None) -> str:
    """Render ``q``; ``slot`` optionally overrides how literals/params print."""
    parts = ["SELECT"]
    if q.distinct:
        parts.append("DISTINCT")
    parts.append(", ".join(render_projection(p) for p in q.projections))
    parts += ["FROM", q.from_table]
    for j in q.joins:
        parts += [f"{j.kind} JOIN", j.table, "ON", render_expr(j.on, slot)]
    if q.where is not None:
        parts += ["WHERE", render_expr(q.where, slot)]
    if q.group_by:
        parts += ["GROUP BY", ", ".join(str(c) for c in q.group_by)]
        if q.having_count_gt is not None:
            parts.append(f"HAVING COUNT(*) > {q.having_count_gt}")
    if q.order_by:
        parts += ["ORDER BY", ", ".join(f"{o.col}{' DESC' if o.descending else ''}" for o in q.order_by)]
    if q.limit is not None:
        parts.append(f"LIMIT {q.limit}")
    return " ".join(parts)
