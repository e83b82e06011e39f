import json
import logging

import pytest
from conftest import FIXTURES, model_sources
from loggen import app_log_lines

from semopt.constraints import Constraint, ConstraintSet, Format, Inclusion, Length, Pattern, load_constraints
from semopt.pipeline import (
    STAGES,
    LookupTable,
    PipelineConfig,
    derive_prechecks,
    emit_enum_ddl,
    render_stage_plot,
    run_pipeline,
    stage_report,
)
from semopt.schema import load_schema, make_schema
from semopt.sqlir import parse_template
from semopt.testbed import difftest
from semopt.testbed.datagen import generate_database


@pytest.fixture(scope="module")
def app_run():
    schema = load_schema(FIXTURES / "app" / "schema.json")
    lines = app_log_lines(300, seed=1)
    return schema, lines, run_pipeline(model_sources(FIXTURES / "app" / "models"), schema, lines)


def test_redmine_stage_report(redmine):
    schema, sources, log = redmine
    result = run_pipeline(sources, schema, log)
    assert tuple(stage_report(result)[s] for s in STAGES) == (1, 3, 3, 1, 1)
    assert result.report()["stages"] == stage_report(result)


def test_empty_log(redmine):
    schema, sources, _ = redmine
    result = run_pipeline(sources, schema, [])
    assert set(stage_report(result).values()) == {0}
    assert result.table.entries == {} and result.templates == []


def test_unconstrained_log_has_no_candidates():
    schema = make_schema({"notes": [("id", "integer", False, True), ("body", "text")]})
    result = run_pipeline([], schema, ["SELECT notes.body FROM notes WHERE notes.body = $1  [[\"x\"]]"])
    # the primary key is a constraint, so the template counts, but nothing applies
    (rep,) = result.templates
    assert rep.stages.get("enumerated", 0) == 0 and rep.status in ("no-constraints", "no-candidates")
    assert result.table.entries == {}


def test_app_statuses(app_run):
    _, _, result = app_run
    assert sorted(t.chosen for t in result.templates if t.chosen) == ["AL", "AL+ES", "JE", "PE", "RD"]
    assert result.bad_lines > 0 and len(result.templates) == 7


def test_stage_counts_never_grow(app_run):
    _, _, result = app_run
    for t in result.templates:
        seq = [t.stages.get(s, 0) for s in STAGES[1:]]
        assert seq == sorted(seq, reverse=True), t.sql


def test_lookup_table_round_trip(app_run):
    _, _, result = app_run
    text = result.table.to_json()
    again = LookupTable.from_json(text)
    assert again.to_json() == text
    assert set(again.entries) == set(result.table.entries)
    with pytest.raises(ValueError):
        LookupTable.from_json(json.dumps({**json.loads(text), "format": 99}))


def test_entries_agree_on_fresh_databases(app_run):
    schema, _, result = app_run
    checked = 0
    for seed in (101, 102, 103):
        db = generate_database(schema, result.constraints, 40, seed=seed)
        for e in result.table.entries.values():
            if e.optimized is None:
                continue
            samples = difftest.sample_params(e.original, db, result.constraints, observed=[], k=5, seed=seed)
            for params in samples:
                assert difftest.compare_on(e.original, e.optimized, db, list(params)) is None, e.trace
                checked += 1
    assert checked > 20


def test_pipeline_is_deterministic(app_run):
    schema, lines, result = app_run
    again = run_pipeline(model_sources(FIXTURES / "app" / "models"), schema, lines)
    assert again.table.to_json() == result.table.to_json()
    assert again.report_json() == result.report_json()
    other = run_pipeline(model_sources(FIXTURES / "app" / "models"), schema, lines, PipelineConfig(seed=5))
    assert other.table.config_hash != result.table.config_hash


def test_bad_lines_are_skipped_with_one_warning(redmine, caplog):
    schema, sources, log = redmine
    noise = ["SELECT x FROM nowhere  [[1]]"] * 5 + ["garbage  [[1]"]
    with caplog.at_level(logging.WARNING, logger="semopt.pipeline"):
        result = run_pipeline(sources, schema, log + noise)
    assert result.bad_lines == 6 and len(result.templates) == 1
    assert len([r for r in caplog.records if "skipped" in r.getMessage()]) == 2


def test_one_failing_template_does_not_sink_the_batch(redmine, monkeypatch):
    import semopt.pipeline as pl

    schema, sources, log = redmine
    real = pl.enumerate_rewrites

    def flaky(q, *a, **kw):
        if q.distinct:
            raise RuntimeError("boom")
        return real(q, *a, **kw)

    monkeypatch.setattr(pl, "enumerate_rewrites", flaky)
    extra = ['SELECT users.* FROM users WHERE users.status = $1  [["active"]]']
    result = run_pipeline(sources, schema, log + extra)
    assert [t.status for t in result.templates][0] == "error"
    assert "boom" in result.templates[0].detail
    assert len(result.templates) == 2


def test_report_text_and_plot(app_run, tmp_path):
    _, _, result = app_run
    text = result.summary_text()
    for s in STAGES:
        assert s in text
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render_stage_plot(result.stage_counts(), a)
    render_stage_plot(result.stage_counts(), b)
    assert a.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert a.read_bytes() == b.read_bytes()


# -- prechecks --------------------------------------------------------------------------

USERS = make_schema({"users": [("id", "integer", False, True), ("username", "text"), ("age", "integer")]})


def rules_for(sql, *constraints):
    return derive_prechecks(parse_template(sql, USERS), ConstraintSet(constraints))


def test_format_precheck():
    fmt = Constraint("users", ("username",), Format((Pattern(r"\A[a-z]+\z"),)))
    (r,) = rules_for("SELECT users.id FROM users WHERE users.username = $1", fmt)
    assert r.check == "format-match" and r.param == 1
    assert r.passes("abc") and not r.passes("ab#c") and not r.passes(None)


def test_length_precheck_defaults_min():
    (r,) = rules_for("SELECT users.id FROM users WHERE users.username = $1", Constraint("users", ("username",), Length(max=30)))
    assert r.args == {"min": 0, "max": 30}
    assert r.passes("x" * 30) and not r.passes("x" * 31)


def test_no_precheck_for_ranges_or_unchecked_patterns():
    ln = Constraint("users", ("username",), Length(max=30))
    assert rules_for("SELECT users.id FROM users WHERE users.username > $1", ln) == []
    odd = Constraint("users", ("username",), Format((Pattern(r"\A\p{Greek}+\z"),)))
    assert rules_for("SELECT users.id FROM users WHERE users.username = $1", odd) == []


def test_inclusion_precheck():
    inc = Constraint("users", ("username",), Inclusion(("a", "b")))
    (r,) = rules_for("SELECT users.id FROM users WHERE users.username = $1 AND users.age > 3", inc)
    assert r.check == "inclusion-in" and r.passes("a") and not r.passes("c")


# -- enum DDL ---------------------------------------------------------------------------


def test_ddl_golden():
    schema = load_schema(FIXTURES / "enum" / "schema.json")
    res = emit_enum_ddl(schema, load_constraints(FIXTURES / "enum" / "constraints.json"))
    assert "".join(s + "\n" for s in res.statements) == (FIXTURES / "enum" / "expected_ddl.sql").read_text()


def test_ddl_skips_non_text_and_sorts():
    schema = make_schema({"b": [("id", "integer", False, True), ("s", "text")], "a": [("id", "integer", False, True), ("n", "integer"), ("s", "text")]})
    cs = ConstraintSet(
        [
            Constraint("b", ("s",), Inclusion(("x",))),
            Constraint("a", ("s",), Inclusion(("y", "z"))),
            Constraint("a", ("n",), Inclusion((1, 2))),
        ]
    )
    res = emit_enum_ddl(schema, cs)
    assert res.statements == [
        "CREATE TYPE a_s_enum AS ENUM ('y','z');",
        "ALTER TABLE a ALTER COLUMN s TYPE a_s_enum USING s::a_s_enum;",
        "CREATE TYPE b_s_enum AS ENUM ('x');",
        "ALTER TABLE b ALTER COLUMN s TYPE b_s_enum USING s::b_s_enum;",
    ]
    assert any("a.n" in d for d in res.diagnostics)


def test_untranslatable_format_does_not_stop_the_run():
    schema = make_schema({"users": [("id", "integer", False, True), ("name", "text")]})
    cs = ConstraintSet([Constraint("users", ("name",), Format((Pattern(r"\A\p{Greek}+\z"),)))])
    result = run_pipeline([], schema, ['SELECT users.id FROM users WHERE users.name = $1  [["a"]]'], extra_constraints=cs)
    (rep,) = result.templates
    assert rep.status != "error"
