"""Command-line interface.

Exit status: 0 on success, 1 on bad input, 2 on internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .constraints import (
    ConstraintError,
    ConstraintSet,
    dumps_canonical,
    emit_checker_sql,
    load_constraints,
    merge_constraint_sets,
    schema_constraints,
)
from .extractor import ModelParseError, extract_all
from .schema import SchemaError, load_schema
from .sqlir import LogFormatError, ResolutionError, UnsupportedQuery, parse_template, render

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2
INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    ModelParseError,
    UnsupportedQuery,
    ResolutionError,
    LogFormatError,
    SchemaError,
    ConstraintError,
    KeyError,
)


class InputError(Exception):
    pass


def _model_sources(paths: Sequence[str]) -> list[tuple[str, str]]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("*.rb")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(p)
    return [(str(f), f.read_text(encoding="utf-8")) for f in files]


def _constraints(args, schema) -> ConstraintSet:
    """Constraints from --constraints files and/or --models, plus the schema's own."""
    cs = ConstraintSet()
    for path in getattr(args, "constraints", None) or []:
        cs = cs | load_constraints(path)
    if getattr(args, "models", None):
        ext = extract_all(_model_sources(args.models), schema)
        ext.report(sys.stderr)
        cs = cs | ext.constraints
    return cs | schema_constraints(schema) if schema is not None else cs


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config(args):
    from .pipeline import PipelineConfig

    return PipelineConfig(
        seed=args.seed,
        threshold=args.threshold,
        bound=args.bound,
        rows=args.rows,
        param_samples=args.samples,
        cost_provider=args.cost_provider,
    )


def _write_report(result, directory: str) -> None:
    from .pipeline import render_stage_plot

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(result.report_json(), encoding="utf-8")
    (d / "report.txt").write_text(result.summary_text(), encoding="utf-8")
    render_stage_plot(result.stage_counts(), d / "stages.png")


# -- subcommands ----------------------------------------------------------------------


def cmd_extract(args) -> int:
    schema = load_schema(args.schema)
    ext = extract_all(_model_sources(args.models), schema)
    ext.report(sys.stderr)
    _write(ext.constraints.to_json(), args.out)
    print(
        f"{len(ext.constraints)} constraints, {ext.missed} missed validations, {ext.opaque} opaque statements",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_merge(args) -> int:
    merged = merge_constraint_sets([load_constraints(p) for p in args.files])
    _write(merged.to_json(), args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    schema = load_schema(args.schema) if args.schema else None
    cs = ConstraintSet()
    for path in args.constraints:
        cs = cs | load_constraints(path)
    _write("".join(s + "\n" for s in emit_checker_sql(cs, schema)), args.out)
    return EXIT_OK


def cmd_gendata(args) -> int:
    from .testbed.database import dump_csv
    from .testbed.datagen import generate_database

    schema = load_schema(args.schema)
    cs = _constraints(args, schema)
    db = generate_database(schema, cs, args.rows, args.seed)
    for p in dump_csv(db, args.out):
        print(p, file=sys.stderr)
    return EXIT_OK


def _run(args, log_lines):
    from .pipeline import run_pipeline

    schema = load_schema(args.schema)
    extra = ConstraintSet()
    for path in args.constraints or []:
        extra = extra | load_constraints(path)
    result = run_pipeline(_model_sources(args.models or []), schema, log_lines, _config(args), extra)
    result.extraction.report(sys.stderr)
    return result


def cmd_optimize(args) -> int:
    from .pipeline import write_counterexamples

    with open(args.log, encoding="utf-8") as fh:
        result = _run(args, fh.read().splitlines())
    result.table.write(args.out)
    if args.report:
        _write_report(result, args.report)
    if args.counterexamples:
        for p in write_counterexamples(result, args.counterexamples):
            print(f"counterexample: {p}", file=sys.stderr)
    sys.stderr.write(result.summary_text())
    return EXIT_OK


def cmd_rewrite(args) -> int:
    from .pipeline import LookupTable
    from .replay import Rewriter

    lines = sys.stdin.read().splitlines()
    if args.lut:
        table = LookupTable.load(args.lut)
    else:
        if not (args.schema and args.models):
            raise InputError("rewrite needs --lut, or --schema with --models")
        result = _run(args, lines)
        table = result.table
        if args.report:
            _write_report(result, args.report)
    counts = Rewriter(table).rewrite_stream(lines, sys.stdout)
    print(" ".join(f"{k}={v}" for k, v in counts.items()), file=sys.stderr)
    return EXIT_OK


def cmd_prechecks(args) -> int:
    from .pipeline import LookupTable

    table = LookupTable.load(args.lut)
    out = {
        fp: {"original": render(e.original), "prechecks": [r.to_dict() for r in e.prechecks]}
        for fp, e in sorted(table.entries.items())
        if e.prechecks
    }
    _write(dumps_canonical(out), args.out)
    return EXIT_OK


def cmd_ddl(args) -> int:
    from .pipeline import emit_enum_ddl

    schema = load_schema(args.schema)
    res = emit_enum_ddl(schema, _constraints(args, schema))
    for d in res.diagnostics:
        print(d, file=sys.stderr)
    _write("".join(s + "\n" for s in res.statements), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .replay import write_counterexample
    from .verifier import NotEquivalent, VerificationTask, verify_equivalence

    schema = load_schema(args.schema)
    cs = _constraints(args, schema)
    original = parse_template(args.original, schema)
    candidate = parse_template(args.candidate, schema)
    v = verify_equivalence(VerificationTask(original, candidate, cs, schema, bound=args.bound))
    print(type(v).__name__, json.dumps({k: val for k, val in vars(v).items() if k != "database"}, default=str))
    if isinstance(v, NotEquivalent) and args.out:
        write_counterexample(args.out, original, candidate, v)
        print(f"counterexample written to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_replay(args) -> int:
    from .replay import replay_directory

    outcome = replay_directory(args.directory)
    if outcome.reproduced:
        print(f"reproduced: {outcome.reason}")
        return EXIT_OK
    print("not reproduced: both queries agree on this database")
    return EXIT_INPUT


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threshold", type=int, default=200, help="max rewrite candidates per template")
    common.add_argument("--bound", type=int, default=3, help="rows per table for bounded verification")
    common.add_argument("--cost-provider", default=None, help="external cost command (default: built-in model)")
    common.add_argument("--rows", type=int, default=100, help="rows per table in generated test databases")
    common.add_argument("--samples", type=int, default=5, help="parameter samples per template")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="semopt", description="Constraint-driven query optimization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, fn, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, parents=[common], help=help)
        sp.set_defaults(func=fn)
        return sp

    sp = add("extract", cmd_extract, "extract constraints from model files")
    sp.add_argument("--models", nargs="+", required=True)
    sp.add_argument("--schema", required=True)
    sp.add_argument("--out")

    sp = add("merge", cmd_merge, "merge constraint files from several applications")
    sp.add_argument("files", nargs="+")
    sp.add_argument("--out")

    sp = add("check", cmd_check, "emit violation-checking SQL")
    sp.add_argument("--constraints", nargs="+", required=True)
    sp.add_argument("--schema")
    sp.add_argument("--out")

    sp = add("gendata", cmd_gendata, "generate a constraint-satisfying test database as CSV")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--constraints", nargs="*")
    sp.add_argument("--models", nargs="*")
    sp.add_argument("--out", required=True)

    for name, fn, help in (
        ("optimize", cmd_optimize, "build a lookup table from a query log"),
        ("rewrite", cmd_rewrite, "rewrite a stream of log lines from stdin"),
    ):
        sp = add(name, fn, help)
        sp.add_argument("--schema", required=name == "optimize")
        sp.add_argument("--models", nargs="*")
        sp.add_argument("--constraints", nargs="*")
        sp.add_argument("--report", help="directory for report.json, report.txt and stages.png")
        if name == "optimize":
            sp.add_argument("--log", required=True)
            sp.add_argument("--out", required=True)
            sp.add_argument("--counterexamples", help="directory for rejected-candidate witnesses")
        else:
            sp.add_argument("--lut")

    sp = add("prechecks", cmd_prechecks, "list parameter prechecks in a lookup table")
    sp.add_argument("--lut", required=True)
    sp.add_argument("--out")

    sp = add("ddl", cmd_ddl, "emit enum DDL for inclusion constraints")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--constraints", nargs="*")
    sp.add_argument("--models", nargs="*")
    sp.add_argument("--out")

    sp = add("verify", cmd_verify, "check two query templates for bounded equivalence")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--constraints", nargs="*")
    sp.add_argument("--models", nargs="*")
    sp.add_argument("--original", required=True)
    sp.add_argument("--candidate", required=True)
    sp.add_argument("--out", help="directory for the counterexample, if any")

    sp = add("replay", cmd_replay, "re-run a counterexample directory")
    sp.add_argument("directory")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
