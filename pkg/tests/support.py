"""Shared fixture loaders for tests that run outside pytest fixtures."""

from __future__ import annotations

import json
from pathlib import Path

from conftest import FIXTURES, model_sources

from semopt.constraints import (
    Bound,
    Constraint,
    ConstraintSet,
    Numerical,
    Presence,
    Uniqueness,
    constraint_from_dict,
    schema_constraints,
)
from semopt.extractor import extract_all
from semopt.schema import make_schema
from semopt.sqlir import parse_template


def app_constraints(schema):
    ext = extract_all(model_sources(FIXTURES / "app" / "models"), schema)
    return ext.constraints | schema_constraints(schema)


def corpus_queries(schema) -> list[tuple[str, object]]:
    lines = (FIXTURES / "corpus" / "queries.sql").read_text(encoding="utf-8").splitlines()
    return [(s, parse_template(s, schema)) for s in (line.strip() for line in lines) if s and not s.startswith("--")]


def load_golden(path: Path) -> ConstraintSet:
    return ConstraintSet(constraint_from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8")))


def wide_table_case(n: int):
    """A template with ``n`` implied predicates on a unique projected column.

    Each predicate can be eliminated and DISTINCT removal and LIMIT 1 apply on
    top of every such variant, so candidates grow as roughly 4 * n.
    """
    cols = [("id", "integer", False, True)] + [(f"c{i}", "integer") for i in range(n)]
    schema = make_schema({"wide": cols})
    cs = ConstraintSet(
        [Constraint("wide", (f"c{i}",), Numerical(lower=Bound(0, True))) for i in range(n)]
        + [Constraint("wide", ("c0",), Uniqueness()), Constraint("wide", ("c0",), Presence())]
    )
    where = " AND ".join(f"wide.c{i} > -1" for i in range(n))
    return schema, cs, f"SELECT DISTINCT wide.c0 FROM wide WHERE {where}"
