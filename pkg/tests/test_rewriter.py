import pytest
from conftest import FIXTURES, model_sources
from support import wide_table_case

from semopt.constraints import (
    Bound,
    Constraint,
    ConstraintSet,
    ForeignKey,
    Inclusion,
    Numerical,
    Presence,
    Uniqueness,
    schema_constraints,
)
from semopt.extractor import extract_all
from semopt.rewriter import (
    applicable_rules,
    apply_add_limit_one,
    apply_empty_set_detection,
    apply_join_elimination,
    apply_predicate_elimination,
    apply_predicate_introduction,
    apply_remove_distinct,
    derive_intervals,
    enumerate_rewrites,
)
from semopt.schema import load_schema, make_schema
from semopt.sqlir import fingerprint, parse_template, render

REDMINE = (
    "SELECT DISTINCT users.* FROM users INNER JOIN members ON members.user_id = users.id "
    "WHERE users.status = $1 AND (members.project_id = $2)"
)


@pytest.fixture(scope="module")
def redmine():
    schema = load_schema(FIXTURES / "redmine" / "schema.json")
    ext = extract_all(model_sources(FIXTURES / "redmine" / "models"), schema)
    return schema, ext.constraints | schema_constraints(schema)


SCHEMA = make_schema(
    {
        "t": [("id", "integer", False, True), ("f", "integer"), ("g", "integer"), ("qty", "integer"), ("status", "text"), ("email", "text")],
        "projects": [("id", "integer", False, True), ("name", "text")],
        "wikipages": [("id", "integer", False, True), ("project_id", "integer"), ("title", "text")],
    }
)


def cs_of(*items):
    return ConstraintSet(Constraint(t, (c,) if isinstance(c, str) else c, k) for t, c, k in items)


def q(sql):
    return parse_template(sql, SCHEMA)


def test_redmine_rules_and_candidates(redmine):
    schema, cs = redmine
    t = parse_template(REDMINE, schema)
    uniques = ConstraintSet(c for c in cs if isinstance(c.kind, Uniqueness))
    assert [r.code for r in applicable_rules(t, schema, uniques)] == ["RD", "AL"]
    # NOT NULL columns also trigger PE and ES, which find nothing to rewrite here
    assert [r.code for r in applicable_rules(t, schema, cs)] == ["RD", "AL", "PE", "ES"]
    e = enumerate_rewrites(t, schema, cs)
    assert not e.truncated
    got = {c.trace_string: render(c.template) for c in e.candidates}
    base = render(t)
    assert got == {
        "RD": base.replace("DISTINCT ", ""),
        "AL": base + " LIMIT 1",
        "RD+AL": base.replace("DISTINCT ", "") + " LIMIT 1",
    }


def test_threshold_one_truncates(redmine):
    schema, cs = redmine
    e = enumerate_rewrites(parse_template(REDMINE, schema), schema, cs, threshold=1)
    assert len(e.candidates) == 1 and e.truncated
    with pytest.raises(ValueError):
        enumerate_rewrites(parse_template(REDMINE, schema), schema, cs, threshold=0)


def test_unconstrained_query_has_no_rules():
    t = q("SELECT t.status FROM t WHERE t.status = 'x'")
    cs = cs_of(("projects", "name", Presence()))
    assert applicable_rules(t, SCHEMA, cs) == []
    assert enumerate_rewrites(t, SCHEMA, cs).candidates == []


def test_numerical_where_column_rules():
    t = q("SELECT t.id FROM t WHERE t.f > 3")
    codes = [r.code for r in applicable_rules(t, SCHEMA, cs_of(("t", "f", Numerical(lower=Bound(0, True)))))]
    assert {"PE", "PI", "ES"} <= set(codes)


def test_remove_distinct_and_limit():
    assert apply_remove_distinct(q("SELECT t.id FROM t")) == []
    (r,) = apply_remove_distinct(q("SELECT DISTINCT t.id FROM t LIMIT 5"))
    assert not r.distinct and r.limit == 5
    assert apply_add_limit_one(q("SELECT t.id FROM t LIMIT 5")) == []
    (r,) = apply_add_limit_one(q("SELECT t.id FROM t"))
    assert r.limit == 1


def test_intervals():
    (br,) = derive_intervals(q("SELECT t.id FROM t WHERE t.f < 0"), SCHEMA, cs_of(("t", "f", Numerical(lower=Bound(0, True)))))
    assert br.empty
    cs = cs_of(("t", "f", Numerical(Bound(1, True), Bound(10, True))))
    (br,) = derive_intervals(q("SELECT t.id FROM t WHERE t.f > 3 AND t.f = t.g"), SCHEMA, cs)
    g = br.interval("t", "g")
    assert not br.empty
    assert [v for v in range(-5, 16) if g.admits(v)] == list(range(4, 11))
    (br,) = derive_intervals(q("SELECT t.id FROM t WHERE t.email IS NULL"), SCHEMA, cs_of(("t", "email", Presence())))
    assert br.empty


def test_predicate_elimination():
    cs = cs_of(("t", "qty", Numerical(lower=Bound(1, True))))
    (r,) = apply_predicate_elimination(q("SELECT t.id FROM t WHERE t.qty > 0 AND t.status = $1"), SCHEMA, cs)
    assert render(r) == "SELECT t.id FROM t WHERE t.status = $1"
    (r,) = apply_predicate_elimination(q("SELECT t.id FROM t WHERE t.email IS NOT NULL"), SCHEMA, cs_of(("t", "email", Presence())))
    assert r.where is None
    assert apply_predicate_elimination(q("SELECT t.id FROM t WHERE t.qty > 5"), SCHEMA, cs) == []


def test_predicate_introduction():
    cs = cs_of(("t", "f", Numerical(Bound(1, True), Bound(10, True))))
    cands = [render(r) for r in apply_predicate_introduction(q("SELECT t.id FROM t WHERE t.f = t.g"), SCHEMA, cs)]
    assert "SELECT t.id FROM t WHERE t.f = t.g AND t.g >= 1 AND t.g <= 10" in cands
    assert apply_predicate_introduction(q("SELECT t.id FROM t WHERE t.f = t.g"), SCHEMA, ConstraintSet()) == []
    redundant = q("SELECT t.id FROM t WHERE t.f >= 1 AND t.f <= 10")
    assert apply_predicate_introduction(redundant, SCHEMA, cs) == []


WIKI = "SELECT wikipages.* FROM wikipages INNER JOIN projects ON wikipages.project_id = projects.id"
FK = ("wikipages", "project_id", ForeignKey("projects", "id"))
PK = ("projects", "id", Uniqueness())


def test_join_elimination():
    cs = cs_of(FK, PK, ("wikipages", "project_id", Presence()))
    (r,) = apply_join_elimination(q(WIKI), SCHEMA, cs)
    assert render(r) == "SELECT wikipages.* FROM wikipages"
    used = WIKI.replace("wikipages.*", "wikipages.id, projects.name")
    assert apply_join_elimination(q(used), SCHEMA, cs) == []
    assert apply_join_elimination(q(WIKI), SCHEMA, cs_of(FK, PK)) == []


def test_empty_set_detection():
    cs = cs_of(("t", "f", Numerical(upper=Bound(100, False))))
    (r,) = apply_empty_set_detection(q("SELECT t.id FROM t WHERE t.f > 200"), SCHEMA, cs)
    assert render(r) == "SELECT t.id FROM t WHERE FALSE"
    assert apply_empty_set_detection(q("SELECT t.id FROM t WHERE t.f > 200 OR t.f < 50"), SCHEMA, cs) == []
    dead = cs_of(("t", "status", Inclusion(())))
    (r,) = apply_empty_set_detection(q("SELECT t.id FROM t WHERE t.status = $1"), SCHEMA, dead)
    assert render(r).endswith("WHERE FALSE")


def test_candidates_differ_from_original_and_include_single_rules():
    schema, cs, sql = wide_table_case(4)
    t = parse_template(sql, schema)
    e = enumerate_rewrites(t, schema, cs)
    fps = [c.fingerprint for c in e.candidates]
    assert fingerprint(t) not in fps and len(set(fps)) == len(fps)
    singles = {fingerprint(r) for r in apply_remove_distinct(t) + apply_add_limit_one(t)}
    singles |= {fingerprint(r) for r in apply_predicate_elimination(t, schema, cs)}
    assert singles <= set(fps)


def test_layer_product_bound():
    # RD and AL give one rewrite each, PE up to n + 1 per candidate
    for n in (2, 5, 10):
        schema, cs, sql = wide_table_case(n)
        e = enumerate_rewrites(parse_template(sql, schema), schema, cs, threshold=10_000)
        assert len(e.candidates) <= (1 + 1) * (1 + 1) * (1 + n + 1) - 1


def test_stress_template_truncates():
    schema, cs, sql = wide_table_case(60)
    e = enumerate_rewrites(parse_template(sql, schema), schema, cs, 200)
    assert e.truncated and len(e.candidates) == 200
    assert e.dump().count("\n") == 200


def test_enumeration_is_deterministic(redmine):
    schema, cs = redmine
    t = parse_template(REDMINE, schema)
    assert enumerate_rewrites(t, schema, cs).dump() == enumerate_rewrites(t, schema, cs).dump()
