"""Independent reference implementations used as test oracles.

The evaluator here is deliberately naive: a full cross product of the FROM
and JOIN tables, predicates evaluated by direct recursion in three-valued
logic, then grouping, ordering, projection, DISTINCT and LIMIT. It shares
nothing with the engine except the query IR.
"""

from __future__ import annotations

import random
import re
from collections import Counter

from semopt.sqlir.ir import (
    And,
    CharLength,
    ColumnRef,
    Compare,
    Const,
    CountStar,
    InList,
    IsNull,
    Lit,
    Match,
    Not,
    Or,
    Star,
)
from semopt.testbed.database import Database

UNKNOWN = None


def _value(o, env):
    if isinstance(o, ColumnRef):
        return env[(o.table, o.column)]
    if isinstance(o, CharLength):
        v = env[(o.col.table, o.col.column)]
        return None if v is None else len(str(v))
    if isinstance(o, Lit):
        return o.value
    raise TypeError(o)


def _cmp(op, a, b):
    if a is None or b is None:
        return UNKNOWN
    if type(a) is not type(b) and not (isinstance(a, (int, float)) and isinstance(b, (int, float))):
        return op == "<>"
    if isinstance(a, bool) != isinstance(b, bool):
        return op == "<>"
    return {
        "=": a == b,
        "<>": a != b,
        "<": a < b,
        "<=": a <= b,
        ">": a > b,
        ">=": a >= b,
    }[op]


def truth(e, env):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, And):
        vals = [truth(i, env) for i in e.items]
        if any(v is False for v in vals):
            return False
        return UNKNOWN if any(v is None for v in vals) else True
    if isinstance(e, Or):
        vals = [truth(i, env) for i in e.items]
        if any(v is True for v in vals):
            return True
        return UNKNOWN if any(v is None for v in vals) else False
    if isinstance(e, Not):
        v = truth(e.item, env)
        return None if v is None else not v
    if isinstance(e, Compare):
        return _cmp(e.op, _value(e.left, env), _value(e.right, env))
    if isinstance(e, InList):
        v = _value(e.col, env)
        results = [_cmp("=", v, _value(i, env)) for i in e.items]
        if any(r is True for r in results):
            return True
        return UNKNOWN if any(r is None for r in results) else False
    if isinstance(e, IsNull):
        v = _value(e.col, env)
        return (v is not None) if e.negated else (v is None)
    if isinstance(e, Match):
        v = _value(e.col, env)
        if v is None:
            return UNKNOWN
        flags = re.IGNORECASE if e.case_insensitive else 0
        return re.search(e.pattern, str(v), flags) is not None
    raise TypeError(e)


def reference_evaluate(q, db: Database) -> list[tuple]:
    """Rows of ``q`` over ``db``; ``q`` must be ground and resolved."""
    schema = db.schema
    tables = [q.from_table] + [j.table for j in q.joins]
    cols = {t: schema.table(t).column_names for t in tables}

    def envs():
        # left-deep nested loops, one join at a time (needed for LEFT joins)
        partial = [{(tables[0], c): v for c, v in zip(cols[tables[0]], r)} for r in db.rows(tables[0])]
        for j in q.joins:
            nxt = []
            for env in partial:
                matched = False
                for r in db.rows(j.table):
                    e2 = dict(env)
                    e2.update({(j.table, c): v for c, v in zip(cols[j.table], r)})
                    if truth(j.on, e2) is True:
                        nxt.append(e2)
                        matched = True
                if not matched and j.kind == "LEFT":
                    e2 = dict(env)
                    e2.update({(j.table, c): None for c in cols[j.table]})
                    nxt.append(e2)
            partial = nxt
        return partial

    rows = [e for e in envs() if q.where is None or truth(q.where, e) is True]

    def project(env, count=None):
        out = []
        for p in q.projections:
            if isinstance(p, Star):
                for t in [p.table] if p.table else tables:
                    out.extend(env[(t, c)] for c in cols[t])
            elif isinstance(p, CountStar):
                out.append(count)
            else:
                out.append(env[(p.table, p.column)])
        return tuple(out)

    def order(items, env_of):
        for o in reversed(q.order_by):
            key = (o.col.table, o.col.column)
            nonnull = [x for x in items if env_of(x)[key] is not None]
            nulls = [x for x in items if env_of(x)[key] is None]
            nonnull.sort(key=lambda x: env_of(x)[key], reverse=o.descending)
            items = nulls + nonnull if o.descending else nonnull + nulls
        return items

    if q.is_aggregate:
        groups: dict = {}
        for env in rows:
            groups.setdefault(tuple(env[(c.table, c.column)] for c in q.group_by), []).append(env)
        if not q.group_by:
            groups = {(): rows}
        picked = [
            (members[0] if members else None, len(members))
            for members in groups.values()
            if q.having_count_gt is None or len(members) > q.having_count_gt
        ]
        picked = order(picked, lambda x: x[0])
        result = [project(env or {}, n) for env, n in picked]
    else:
        result = [project(env) for env in order(rows, lambda x: x)]
    if q.distinct:
        result = list(dict.fromkeys(result))
    if q.limit is not None:
        result = result[: q.limit]
    return result


def same_result(q, db: Database, engine_rows) -> bool:
    """Engine rows agree with the reference, allowing any row choice under LIMIT without ORDER BY."""
    if q.limit is None:
        return Counter(engine_rows) == Counter(reference_evaluate(q, db))
    full = reference_evaluate(q.with_(limit=None), db)
    if q.order_by:
        return list(engine_rows) == full[: q.limit]
    if len(engine_rows) != min(q.limit, len(full)):
        return False
    return not (Counter(engine_rows) - Counter(full))


def random_database(schema, rng: random.Random, bound: int = 4, domains=None) -> Database:
    """Up to ``bound`` rows per table over small domains, NULLs included; constraints are ignored."""
    domains = domains or {}
    tables = {}
    for t in schema.tables:
        n = rng.randint(0, bound)
        rows = []
        for _ in range(n):
            row = []
            for c in t.columns:
                pool = domains.get((t.name, c.name)) or _default_domain(c.type)
                if c.nullable and rng.random() < 0.2:
                    row.append(None)
                else:
                    row.append(rng.choice(pool))
            rows.append(tuple(row))
        tables[t.name] = tuple(rows)
    return Database(schema, tables)


def _default_domain(typ):
    return {
        "integer": [1, 2, 3],
        "float": [0.5, 1.0, 2.5],
        "text": ["a", "b", "ab", ""],
        "boolean": [True, False],
        "timestamp": ["2020-01-01 00:00:00", "2021-06-01 12:00:00"],
    }.get(typ, ["x", "y"])
