"""Runtime side: swap logged queries for their optimized form.

Per query the work is one parse, one fingerprint and one dictionary lookup.
Anything unexpected falls back to running the query unchanged.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence, TextIO

from .pipeline import LookupEntry, LookupTable, occurrences
from .schema import schema_from_dict
from .sqlir import Query, fingerprint, parse_log_record, parse_template, render
from .sqlir.ir import FALSE, Join, Lit, Param, map_operands, params_of
from .sqlir.template import coerce_literal
from .testbed.database import dump_csv, load_csv
from .testbed.difftest import compare_on

log = logging.getLogger(__name__)

REWRITTEN = "rewritten"
PRECHECK_EMPTY = "precheck-empty"
PASSTHROUGH = "passthrough"


@dataclass(frozen=True)
class Replacement:
    action: str
    sql: str
    fingerprint: str | None = None


def ground(q: Query, values: Sequence[Any]) -> Query:
    """Substitute ``$i`` by ``values[i-1]``; unused values are fine."""
    types = dict(q.param_types)

    def fn(o):
        if isinstance(o, Param):
            v = values[o.index - 1]
            typ = types.get(o.index)
            return Lit(coerce_literal(v, typ) if typ and v is not None else v)
        return o

    return q.with_(
        joins=tuple(Join(j.table, map_operands(j.on, fn), j.kind) for j in q.joins),
        where=map_operands(q.where, fn),
    )


def sentinel(q: Query, values: Sequence[Any]) -> Query:
    """Same projections, no rows."""
    g = ground(q, values)
    return g.with_(where=FALSE, group_by=(), having_count_gt=None, order_by=(), limit=None)


def _align(entry: LookupEntry, q: Query, params: Sequence[Any]) -> list[Any] | None:
    """Values for the entry's own parameter ordinals, or None when ``q`` is a different variant."""
    incoming = occurrences(q)
    if len(incoming) != len(entry.slots):
        return None
    mapping: dict[int, int] = {}
    back: dict[int, int] = {}
    for (ek, ev), (ik, iv) in zip(entry.slots, incoming):
        if ek != ik:
            return None
        if ek == "lit":
            if ev != iv:
                return None
            continue
        if mapping.setdefault(ev, iv) != iv or back.setdefault(iv, ev) != ev:
            return None
    out = []
    for i in range(1, max(mapping, default=0) + 1):
        v = params[mapping[i] - 1] if i in mapping else None
        typ = entry.original.param_type(i)
        out.append(coerce_literal(v, typ) if typ else v)
    return out


class Rewriter:
    def __init__(self, table: LookupTable) -> None:
        self.table = table
        self.schema = table.schema

    def replace_query(self, template: str, params: Sequence[Any] = ()) -> Replacement:
        try:
            q = parse_template(template, self.schema)
        except Exception as exc:  # unknown shapes just run as they are
            log.debug("passthrough, parse failed: %s", exc)
            return Replacement(PASSTHROUGH, template)
        needed = max(params_of(q), default=0)
        if needed != len(params):
            print(
                f"warning: arity mismatch: template has {needed} parameters, got {len(params)}; passing through",
                file=sys.stderr,
            )
            return Replacement(PASSTHROUGH, template)
        fp = fingerprint(q)
        entry = self.table.entries.get(fp)
        if entry is None:
            return Replacement(PASSTHROUGH, template, fp)
        values = _align(entry, q, params)
        if values is None:
            return Replacement(PASSTHROUGH, template, fp)
        try:
            for rule in entry.prechecks:
                if not rule.passes(values[rule.param - 1]):
                    return Replacement(PRECHECK_EMPTY, render(sentinel(q, params)), fp)
            if entry.optimized is not None:
                return Replacement(REWRITTEN, render(ground(entry.optimized, values)), fp)
        except Exception as exc:
            log.warning("passthrough for %s: %s", fp, exc)
        return Replacement(PASSTHROUGH, template, fp)

    def replace_line(self, line: str) -> Replacement:
        """One log line in; passthrough keeps the line exactly as given."""
        text = line.rstrip("\r\n")
        try:
            rec = parse_log_record(text)
        except ValueError:
            return Replacement(PASSTHROUGH, text)
        r = self.replace_query(rec.template, rec.params)
        if r.action == PASSTHROUGH:
            return Replacement(PASSTHROUGH, text, r.fingerprint)
        return r

    def rewrite_stream(self, lines: Iterable[str], out: TextIO) -> dict[str, int]:
        counts = {REWRITTEN: 0, PRECHECK_EMPTY: 0, PASSTHROUGH: 0}
        for line in lines:
            if not line.strip():
                continue
            r = self.replace_line(line)
            counts[r.action] += 1
            out.write(f"{r.action}\t{r.sql}\n")
        return counts


def replace_query(template: str, params: Sequence[Any], table: LookupTable) -> Replacement:
    return Rewriter(table).replace_query(template, params)


# -- counterexamples ----------------------------------------------------------------------


def write_counterexample(directory: str | Path, original: Query, candidate: Query, verdict) -> Path:
    """Write a witness as ``<table>.csv`` files plus ``schema.json`` and ``params.json``."""
    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    dump_csv(verdict.database, base)
    (base / "schema.json").write_text(
        json.dumps(verdict.database.schema.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    info = {
        "candidate": render(candidate),
        "candidate_rows": [list(r) for r in verdict.candidate_rows],
        "original": render(original),
        "original_rows": [list(r) for r in verdict.original_rows],
        "params": list(verdict.params),
        "reason": verdict.reason,
    }
    (base / "params.json").write_text(json.dumps(info, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return base


@dataclass
class ReplayOutcome:
    reason: str | None
    original: str
    candidate: str
    params: list

    @property
    def reproduced(self) -> bool:
        return self.reason is not None


def replay_directory(directory: str | Path) -> ReplayOutcome:
    base = Path(directory)
    schema = schema_from_dict(json.loads((base / "schema.json").read_text(encoding="utf-8")))
    info = json.loads((base / "params.json").read_text(encoding="utf-8"))
    db = load_csv(schema, base)
    original = parse_template(info["original"], schema)
    candidate = parse_template(info["candidate"], schema)
    reason = compare_on(original, candidate, db, info["params"])
    return ReplayOutcome(reason, info["original"], info["candidate"], info["params"])
