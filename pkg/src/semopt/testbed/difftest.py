"""Differential testing of candidates against the original on generated data."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from ..constraints import ConstraintSet, Inclusion, Numerical
from ..sqlir.ir import CharLength, ColumnRef, Compare, InList, Param, Query, params_of, query_atoms
from ..sqlir.template import instantiate
from .database import Database
from .engine import compile_plan

PARAM_SAMPLES = 5


def comparison_mode(original: Query, candidate: Query) -> str:
    """How results are compared: ``bag``, ``unlimited`` or ``cardinality``.

    ``cardinality`` covers a LIMIT 1 added to an unlimited query: it is only
    sound when the original never returns more than one row.
    """
    if candidate.limit == 1 and original.limit is None:
        return "cardinality"
    if candidate.limit == original.limit and candidate.limit is not None:
        return "unlimited"
    return "bag"


def strip_limit(q: Query) -> Query:
    return q.with_(limit=None)


def results_differ(mode: str, orig_rows: list, cand_rows: list) -> str | None:
    """Reason string when results disagree, else None.

    For ``cardinality`` and ``unlimited`` the rows passed in must come from
    the queries with their LIMIT removed.
    """
    if mode == "cardinality" and len(orig_rows) > 1:
        return f"original returns {len(orig_rows)} rows, LIMIT 1 would drop some"
    if len(orig_rows) != len(cand_rows) or Counter(orig_rows) != Counter(cand_rows):
        return "result bags differ"
    return None


def compare_on(original: Query, candidate: Query, db: Database, params: Sequence[Any]) -> str | None:
    mode = comparison_mode(original, candidate)
    if mode != "bag":
        original, candidate = strip_limit(original), strip_limit(candidate)
    o = compile_plan(_ground(original, params), db.schema).run(db)
    c = compile_plan(_ground(candidate, params), db.schema).run(db)
    return results_differ(mode, o, c)


def _ground(q: Query, params: Sequence[Any]) -> Query:
    return instantiate(q, list(params)) if params_of(q) else q


def param_columns(q: Query) -> dict[int, ColumnRef]:
    """The column each parameter ordinal is compared with."""
    out: dict[int, ColumnRef] = {}
    for a in query_atoms(q):
        if isinstance(a, Compare) and isinstance(a.right, Param):
            col = a.left.col if isinstance(a.left, CharLength) else a.left
            if isinstance(col, ColumnRef):
                out.setdefault(a.right.index, col)
        elif isinstance(a, InList):
            for it in a.items:
                if isinstance(it, Param):
                    out.setdefault(it.index, a.col)
    return out


def sample_params(
    q: Query,
    db: Database,
    cs: ConstraintSet,
    observed: Iterable[Sequence[Any]] = (),
    k: int = PARAM_SAMPLES,
    seed: int = 0,
) -> list[tuple]:
    """Parameter tuples for testing: logged values first, then draws from the data.

    Drawn values come from the parameter's column in ``db``, mixed with
    values that sit on the column's constraint boundaries.
    """
    ordinals = sorted(set(params_of(q)))
    if not ordinals:
        return [()]
    arity = max(ordinals)
    out: list[tuple] = []
    for p in observed:
        t = tuple(p)
        if len(t) == arity and t not in out:
            out.append(t)
        if len(out) >= k:
            return out
    rng = random.Random(seed)
    cols = param_columns(q)
    pools: dict[int, list] = {}
    for i in ordinals:
        col = cols.get(i)
        pool: list = []
        if col is not None:
            pool = [v for v in db.column_values(col.table, col.column) if v is not None]
            for c in cs.on_column(col.table, col.column):
                if isinstance(c.kind, Inclusion):
                    pool.extend(c.kind.values)
                elif isinstance(c.kind, Numerical):
                    for b in (c.kind.lower, c.kind.upper):
                        if b is not None:
                            pool.extend([b.value, b.value - 1, b.value + 1])
        pools[i] = pool or [1]
    attempts = 0
    while len(out) < k and attempts < 20 * k:
        attempts += 1
        t = [None] * arity
        for i in ordinals:
            t[i - 1] = rng.choice(pools[i])
        t = tuple(t)
        if t not in out:
            out.append(t)
    return out


@dataclass(frozen=True)
class TestOutcome:
    kept: bool
    reason: str | None = None
    params: tuple | None = None


def test_candidate(
    original: Query, candidate: Query, dbs: Sequence[Database], param_sets: Sequence[Sequence[tuple]]
) -> TestOutcome:
    for db, params_list in zip(dbs, param_sets):
        for params in params_list:
            reason = compare_on(original, candidate, db, params)
            if reason is not None:
                return TestOutcome(False, reason, tuple(params))
    return TestOutcome(True)


def filter_by_test(
    original: Query,
    candidates: Sequence,
    dbs: Sequence[Database],
    cs: ConstraintSet,
    observed: Iterable[Sequence[Any]] = (),
    k: int = PARAM_SAMPLES,
    seed: int = 0,
) -> list[tuple[Any, TestOutcome]]:
    """Run every candidate (objects with ``template``) against the original.

    Returns ``(candidate, outcome)`` for all candidates, in input order.
    """
    observed = [tuple(p) for p in observed]
    param_sets = [sample_params(original, db, cs, observed, k, seed + i) for i, db in enumerate(dbs)]
    return [(c, test_candidate(original, c.template, dbs, param_sets)) for c in candidates]
