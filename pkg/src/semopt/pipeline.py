"""End-to-end optimization: extract, enumerate, cost-filter, test, verify.

The result is a lookup table keyed by query fingerprint, plus a per-stage
report. Everything here is deterministic for a fixed configuration.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__
from .constraints import (
    ConstraintSet,
    Format,
    Inclusion,
    Length,
    dumps_canonical,
    schema_constraints,
    sql_literal,
)
from .extractor import Extraction, extract_all
from .regex import Uncheckable, ruby_to_python
from .rewriter import RewriteCandidate, constraints_on_used_fields, enumerate_rewrites
from .schema import Schema, schema_from_dict
from .sqlir import LogFormatError, Query, UnsupportedQuery, fingerprint, parse_log_record, parse_template, render
from .sqlir import ResolutionError as QueryResolutionError
from .sqlir.ir import ColumnRef, Compare, Lit, Param, conjuncts, map_operands, params_of
from .testbed.cost import filter_by_cost, resolve_cost_fn
from .testbed.datagen import generate_database
from .testbed.difftest import PARAM_SAMPLES, filter_by_test, param_columns
from .verifier import (
    DEFAULT_BOUND,
    DEFAULT_CEILING,
    EquivalentUpToBound,
    NotEquivalent,
    Skipped,
    verify_batch,
)

log = logging.getLogger(__name__)

STAGES = ("with-constraints", "enumerated", "cost-kept", "test-kept", "verified")
LUT_FORMAT = 1


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    threshold: int = 200
    bound: int = DEFAULT_BOUND
    ceiling: int = DEFAULT_CEILING
    rows: int = 100
    param_samples: int = PARAM_SAMPLES
    cost_provider: str | None = None

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


# -- prechecks ---------------------------------------------------------------------


@dataclass(frozen=True)
class PrecheckRule:
    """A parameter guard; a failing value means the query returns nothing."""

    param: int
    check: str  # length-range, format-match, inclusion-in
    args: dict

    def passes(self, value: Any) -> bool:
        if value is None:
            return False  # col = NULL matches no row
        if self.check == "length-range":
            n = len(str(value))
            lo, hi = self.args.get("min"), self.args.get("max")
            return (lo is None or n >= lo) and (hi is None or n <= hi)
        if self.check == "format-match":
            return all(ruby_to_python(p["source"], p["flags"]).search(str(value)) for p in self.args["patterns"])
        if self.check == "inclusion-in":
            return value in self.args["values"] or str(value) in [str(v) for v in self.args["values"]]
        raise ValueError(f"unknown check {self.check}")

    def to_dict(self) -> dict:
        return {"args": self.args, "check": self.check, "on_fail": "return-empty", "param": self.param}

    @classmethod
    def from_dict(cls, d: dict) -> "PrecheckRule":
        return cls(d["param"], d["check"], d["args"])


def derive_prechecks(t: Query, cs: ConstraintSet) -> list[PrecheckRule]:
    """Guards for top-level ``col = $i`` atoms on columns with value constraints."""
    if t.is_aggregate and not t.group_by:
        return []  # an aggregate over nothing still returns a row
    if any(j.kind != "INNER" for j in t.joins):
        return []
    rules: list[PrecheckRule] = []
    for atom in conjuncts(t.where):
        if not (isinstance(atom, Compare) and atom.op == "=" and isinstance(atom.right, Param)):
            continue
        if not isinstance(atom.left, ColumnRef):
            continue
        col, i = atom.left, atom.right.index
        for c in cs.on_column(col.table, col.column):
            k = c.kind
            if isinstance(k, Length):
                rules.append(PrecheckRule(i, "length-range", {"max": k.max, "min": k.min if k.min is not None else 0}))
            elif isinstance(k, Format):
                pats = [p.to_dict() for p in k.patterns]
                try:
                    for p in k.patterns:
                        ruby_to_python(p.source, p.flags)
                except Uncheckable:
                    continue
                rules.append(PrecheckRule(i, "format-match", {"patterns": pats}))
            elif isinstance(k, Inclusion) and k.values:
                rules.append(PrecheckRule(i, "inclusion-in", {"values": list(k.values)}))
    out, seen = [], set()
    for r in rules:
        key = json.dumps(r.to_dict(), sort_keys=True)
        if key not in seen:
            seen.add(key)
            out.append(r)
    return out


# -- enum DDL ------------------------------------------------------------------------


@dataclass
class DdlResult:
    statements: list[str]
    diagnostics: list[str] = field(default_factory=list)


def emit_enum_ddl(schema: Schema, cs: ConstraintSet) -> DdlResult:
    """CREATE TYPE / ALTER TABLE pairs for inclusion constraints on text columns."""
    pairs: list[tuple[str, str, list[str]]] = []
    diagnostics: list[str] = []
    for c in cs.of_kind(Inclusion):
        if not schema.has_column(c.table, c.column):
            diagnostics.append(f"WARN unresolved-column({c.table}.{c.column}), no enum emitted")
            continue
        typ = schema.column(c.table, c.column).type
        if typ != "text":
            diagnostics.append(f"INFO {c.table}.{c.column} is {typ}, not text; no enum emitted")
            continue
        if not c.kind.values:
            diagnostics.append(f"WARN inclusion on {c.table}.{c.column} is unsatisfiable; no enum emitted")
            continue
        name = f"{c.table}_{c.column}_enum"
        values = ",".join(sql_literal(str(v)) for v in c.kind.values)
        pairs.append(
            (
                c.table,
                c.column,
                [
                    f"CREATE TYPE {name} AS ENUM ({values});",
                    f"ALTER TABLE {c.table} ALTER COLUMN {c.column} TYPE {name} USING {c.column}::{name};",
                ],
            )
        )
    pairs.sort(key=lambda p: (p[0], p[1]))
    return DdlResult([s for _, _, stmts in pairs for s in stmts], diagnostics)


# -- lookup table ----------------------------------------------------------------------


def occurrences(q: Query) -> list[tuple[str, Any]]:
    """Every parameter or literal in textual order: ``("param", i)`` or ``("lit", v)``."""
    out: list[tuple[str, Any]] = []

    def fn(o):
        out.append(("param", o.index) if isinstance(o, Param) else ("lit", o.value))
        return o

    for j in q.joins:
        map_operands(j.on, fn)
    map_operands(q.where, fn)
    return out


@dataclass
class LookupEntry:
    fingerprint: str
    original: Query
    optimized: Query | None
    trace: tuple[str, ...]
    prechecks: list[PrecheckRule]
    verified_bound: int | None
    slots: list[tuple[str, Any]]  # occurrences() of the original

    def to_dict(self) -> dict:
        return {
            "optimized": render(self.optimized) if self.optimized is not None else None,
            "original": render(self.original),
            "prechecks": [r.to_dict() for r in self.prechecks],
            "slots": [[k, v] for k, v in self.slots],
            "trace": "+".join(self.trace),
            "verified_bound": self.verified_bound,
        }


@dataclass
class LookupTable:
    schema: Schema
    entries: dict[str, LookupEntry] = field(default_factory=dict)
    version: str = __version__
    config_hash: str = ""

    def to_json(self) -> str:
        return dumps_canonical(
            {
                "config_hash": self.config_hash,
                "entries": {fp: self.entries[fp].to_dict() for fp in sorted(self.entries)},
                "format": LUT_FORMAT,
                "schema": self.schema.to_dict(),
                "version": self.version,
            }
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "LookupTable":
        data = json.loads(text)
        if data.get("format") != LUT_FORMAT:
            raise ValueError(f"unsupported lookup-table format {data.get('format')!r}")
        schema = schema_from_dict(data["schema"])
        table = cls(schema, version=data.get("version", ""), config_hash=data.get("config_hash", ""))
        for fp, e in data["entries"].items():
            original = parse_template(e["original"], schema)
            optimized = parse_template(e["optimized"], schema) if e["optimized"] is not None else None
            table.entries[fp] = LookupEntry(
                fp,
                original,
                optimized,
                tuple(t for t in e["trace"].split("+") if t),
                [PrecheckRule.from_dict(r) for r in e["prechecks"]],
                e["verified_bound"],
                [(k, v) for k, v in e["slots"]],
            )
        return table

    @classmethod
    def load(cls, path: str | Path) -> "LookupTable":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# -- the run ----------------------------------------------------------------------------


@dataclass
class TemplateReport:
    fingerprint: str
    sql: str
    count: int
    status: str
    stages: dict[str, int] = field(default_factory=dict)
    chosen: str | None = None
    rejected: list[dict] = field(default_factory=list)
    detail: str | None = None

    def to_dict(self) -> dict:
        d = {
            "chosen": self.chosen,
            "count": self.count,
            "fingerprint": self.fingerprint,
            "rejected": self.rejected,
            "sql": self.sql,
            "stages": self.stages,
            "status": self.status,
        }
        if self.detail is not None:
            d["detail"] = self.detail
        return d


@dataclass
class PipelineResult:
    table: LookupTable
    constraints: ConstraintSet
    templates: list[TemplateReport]
    log_lines: int = 0
    bad_lines: int = 0
    extraction: Extraction | None = None
    counterexamples: dict[str, list[tuple[RewriteCandidate, NotEquivalent]]] = field(default_factory=dict)

    def stage_counts(self) -> dict[str, int]:
        return stage_report(self)

    def report(self) -> dict:
        ext = self.extraction
        return {
            "constraints": len(self.constraints),
            "extraction": {
                "diagnostics": len(ext.diagnostics) if ext else 0,
                "missed": ext.missed if ext else 0,
                "opaque": ext.opaque if ext else 0,
            },
            "log": {"lines": self.log_lines, "rejected_lines": self.bad_lines, "templates": len(self.templates)},
            "lookup_entries": len(self.table.entries),
            "stages": self.stage_counts(),
            "templates": [t.to_dict() for t in self.templates],
        }

    def report_json(self) -> str:
        return dumps_canonical(self.report())

    def summary_text(self) -> str:
        counts = self.stage_counts()
        lines = [
            f"log lines: {self.log_lines} ({self.bad_lines} rejected), templates: {len(self.templates)}",
            f"constraints: {len(self.constraints)}, lookup entries: {len(self.table.entries)}",
            "stages:",
        ]
        width = max(len(s) for s in STAGES)
        for s in STAGES:
            lines.append(f"  {s.ljust(width)}  {counts[s]}")
        statuses: dict[str, int] = {}
        for t in self.templates:
            statuses[t.status] = statuses.get(t.status, 0) + 1
        lines.append("templates by status:")
        for k in sorted(statuses):
            lines.append(f"  {k}: {statuses[k]}")
        for t in self.templates:
            if t.chosen:
                lines.append(f"  {t.fingerprint} {t.chosen}: {t.sql}")
        return "\n".join(lines) + "\n"


def stage_report(run: PipelineResult) -> dict[str, int]:
    counts = {s: 0 for s in STAGES}
    for t in run.templates:
        for s in STAGES:
            counts[s] += t.stages.get(s, 0)
    return counts


def render_stage_plot(counts: dict[str, int], path: str | Path, title: str = "candidates per stage") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    values = [counts[s] for s in STAGES]
    bars = ax.bar(STAGES, values, color="#4c72b0")
    for b, v in zip(bars, values):
        ax.annotate(str(v), (b.get_x() + b.get_width() / 2, b.get_height()), ha="center", va="bottom")
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    # fixed metadata keeps the file identical across runs
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


@dataclass
class _Group:
    query: Query
    count: int = 0
    observed: list[tuple] = field(default_factory=list)


def _collect_templates(log_lines: Iterable[str], schema: Schema) -> tuple["OrderedDict[str, _Group]", int, int, list]:
    groups: "OrderedDict[str, _Group]" = OrderedDict()
    n = bad = 0
    problems = []
    for line in log_lines:
        line = line.rstrip("\n")
        if not line.strip():
            continue
        n += 1
        try:
            rec = parse_log_record(line)
            q = parse_template(rec.template, schema)
        except (LogFormatError, UnsupportedQuery, QueryResolutionError, ValueError) as exc:
            bad += 1
            problems.append((line, exc))
            continue
        fp = fingerprint(q)
        g = groups.get(fp)
        if g is None:
            g = groups[fp] = _Group(q)
        g.count += 1
        # only records of the first-seen variant feed its parameter samples
        params = tuple(rec.params)
        if occurrences(q) == occurrences(g.query) and len(params) == max(params_of(q), default=0):
            if params not in g.observed:
                g.observed.append(params)
    return groups, n, bad, problems


def _hints(groups: Iterable[_Group]) -> dict[tuple[str, str], list]:
    hints: dict[tuple[str, str], list] = {}
    for g in groups:
        q = g.query
        cols = param_columns(q)
        for params in g.observed:
            for i, col in cols.items():
                if i <= len(params) and params[i - 1] is not None:
                    hints.setdefault((col.table, col.column), []).append(params[i - 1])
        for atom in conjuncts(q.where):
            if isinstance(atom, Compare) and isinstance(atom.left, ColumnRef) and isinstance(atom.right, Lit):
                hints.setdefault((atom.left.table, atom.left.column), []).append(atom.right.value)
    return {k: list(dict.fromkeys(v)) for k, v in sorted(hints.items())}


def run_pipeline(
    model_sources: Sequence[tuple[str, str]] | Sequence[str],
    schema: Schema,
    log_lines: Iterable[str],
    config: PipelineConfig = PipelineConfig(),
    extra_constraints: ConstraintSet | None = None,
) -> PipelineResult:
    extraction = extract_all(model_sources, schema)
    cs = extraction.constraints | schema_constraints(schema)
    if extra_constraints is not None:
        cs = cs | extra_constraints
    groups, n, bad, problems = _collect_templates(log_lines, schema)
    seen_problems: dict[str, list] = {}
    for line, exc in problems:
        seen_problems.setdefault(str(exc), []).append(line)
    for msg, lines in seen_problems.items():
        log.warning("skipped %d log line(s) like %r: %s", len(lines), lines[0][:80], msg)
    table = LookupTable(schema, config_hash=config.digest())
    result = PipelineResult(table, cs, [], n, bad, extraction)
    if not groups:
        return result
    db = generate_database(schema, cs, config.rows, config.seed, _hints(groups.values()))
    cost = resolve_cost_fn(db, config.cost_provider)
    for fp, g in groups.items():
        try:
            report = _optimize_one(fp, g, schema, cs, db, cost, config, result)
        except Exception as exc:  # one bad template must not sink the batch
            log.exception("template %s failed", fp)
            report = TemplateReport(fp, render(g.query), g.count, "error", detail=f"{type(exc).__name__}: {exc}")
        result.templates.append(report)
    return result


def _optimize_one(fp, g: _Group, schema, cs, db, cost, config: PipelineConfig, result: PipelineResult) -> TemplateReport:
    q = g.query
    rep = TemplateReport(fp, render(q), g.count, "no-constraints")
    prechecks = derive_prechecks(q, cs)
    slots = occurrences(q)
    if not constraints_on_used_fields(q, schema, cs):
        return rep
    rep.stages["with-constraints"] = 1
    enum = enumerate_rewrites(q, schema, cs, config.threshold)
    rep.stages["enumerated"] = len(enum.candidates)
    if enum.truncated:
        rep.detail = "enumeration truncated at threshold"
    original_cost = cost(q)
    kept_cost = [
        RewriteCandidate(c.template, c.trace, value) for c, value in filter_by_cost(enum.candidates, original_cost, lambda c: cost(c.template))
    ]
    rep.stages["cost-kept"] = len(kept_cost)
    tested = filter_by_test(q, kept_cost, [db], cs, g.observed, config.param_samples, config.seed)
    kept_test = [c for c, outcome in tested if outcome.kept]
    for c, outcome in tested:
        if not outcome.kept:
            rep.rejected.append({"stage": "test", "trace": c.trace_string, "reason": outcome.reason})
    rep.stages["test-kept"] = len(kept_test)
    batch = verify_batch(q, kept_test, cs, schema, bound=config.bound, ceiling=config.ceiling)
    for c, v in batch.verdicts:
        if isinstance(v, NotEquivalent):
            rep.rejected.append({"stage": "verify", "trace": c.trace_string, "reason": v.reason})
            result.counterexamples.setdefault(fp, []).append((c, v))
        elif isinstance(v, Skipped):
            rep.rejected.append({"stage": "verify", "trace": c.trace_string, "reason": f"skipped: {v.reason}"})
    chosen = batch.chosen
    if chosen is not None:
        rep.stages["verified"] = 1
        rep.status = "optimized"
        rep.chosen = chosen.trace_string
        verdict = batch.verdicts[-1][1]
        assert isinstance(verdict, EquivalentUpToBound)
        result.table.entries[fp] = LookupEntry(fp, q, chosen.template, chosen.trace, prechecks, verdict.bound, slots)
    else:
        rep.status = "no-verified-rewrite" if enum.candidates else "no-candidates"
        if prechecks:
            result.table.entries[fp] = LookupEntry(fp, q, None, (), prechecks, None, slots)
    if prechecks and rep.status != "optimized":
        rep.status += "+prechecks"
    return rep


def write_counterexamples(result: PipelineResult, directory: str | Path) -> list[Path]:
    """One replayable directory per rejected candidate."""
    from .replay import write_counterexample

    out = []
    base = Path(directory)
    for fp in sorted(result.counterexamples):
        report = next(t for t in result.templates if t.fingerprint == fp)
        original = parse_template(report.sql, result.table.schema)
        for cand, verdict in result.counterexamples[fp]:
            target = base / f"{fp}-{cand.trace_string}"
            write_counterexample(target, original, cand.template, verdict)
            out.append(target)
    return out
