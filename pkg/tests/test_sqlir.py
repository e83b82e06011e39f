import pytest
from conftest import FIXTURES
from support import corpus_queries

from semopt.schema import load_schema
from semopt.sqlir import (
    ArityError,
    LogFormatError,
    ResolutionError,
    UnsupportedQuery,
    extract_used_fields,
    fingerprint,
    format_log_line,
    generalize,
    instantiate,
    parse_log_record,
    parse_query,
    parse_template,
    render,
)
from semopt.sqlir.ir import ColumnRef, InList, Param

REDMINE = (
    "SELECT DISTINCT users.* FROM users INNER JOIN members ON members.user_id = users.id "
    "WHERE users.status = $1 AND (members.project_id = $2)"
)


@pytest.fixture(scope="module")
def schema():
    return load_schema(FIXTURES / "app" / "schema.json")


def test_redmine_template(schema):
    q = parse_template(REDMINE, schema)
    assert q.distinct and q.from_table == "users"
    (j,) = q.joins
    assert j.table == "members" and j.kind == "INNER"
    assert render(q) == (
        "SELECT DISTINCT users.* FROM users INNER JOIN members ON members.user_id = users.id "
        "WHERE users.status = $1 AND members.project_id = $2"
    )


def test_trivial_template(schema):
    q = parse_template("SELECT * FROM users", schema)
    assert q.joins == () and q.where is None


def test_in_list_with_params(schema):
    q = parse_template('SELECT COUNT(*) FROM "users" WHERE "users"."type" IN ($1, $2)', schema)
    assert isinstance(q.where, InList)
    assert q.where.col == ColumnRef("users", "type")
    assert [p.index for p in q.where.items if isinstance(p, Param)] == [1, 2]


def test_param_types_inferred(schema):
    q = parse_template(REDMINE, schema)
    assert q.param_type(1) == "text" and q.param_type(2) == "integer"


def test_used_fields(schema):
    q = parse_template(REDMINE, schema)
    used = extract_used_fields(q, schema)
    assert {("members", "user_id"), ("users", "id"), ("users", "status"), ("members", "project_id")} <= used
    assert {("users", c) for c in schema.table("users").column_names} <= used
    assert extract_used_fields(parse_template("SELECT users.username FROM users", schema), schema) == {("users", "username")}


def test_used_fields_survive_rendering(schema):
    for _, q in corpus_queries(schema):
        assert extract_used_fields(parse_template(render(q), schema), schema) == extract_used_fields(q, schema)


def test_render_is_a_fixpoint(schema):
    for _, q in corpus_queries(schema):
        again = parse_template(render(q), schema)
        assert again == q and render(again) == render(q)


def test_fingerprints(schema):
    a = parse_template("SELECT issues.* FROM issues WHERE issues.project_id = 2", schema)
    b = parse_template("SELECT issues.* FROM issues WHERE issues.project_id = 7", schema)
    c = parse_template("SELECT DISTINCT issues.* FROM issues WHERE issues.project_id = 7", schema)
    assert fingerprint(a) == fingerprint(b) == fingerprint(parse_template(render(a), schema))
    assert fingerprint(a) != fingerprint(c)
    assert fingerprint(parse_template(REDMINE, schema)) == "66fc20b42e522341f6d8"


def test_fingerprints_distinct_on_corpus(schema):
    shapes = {render(generalize(q)[0]) for _, q in corpus_queries(schema)}
    fps = {fingerprint(q) for _, q in corpus_queries(schema)}
    assert len(fps) == len(shapes)


def test_log_record():
    rec = parse_log_record('SELECT COUNT(*) FROM "users" WHERE "users"."type" IN ($1, $2)  [["User"], ["AnonymousUser"]]')
    assert rec.template == 'SELECT COUNT(*) FROM "users" WHERE "users"."type" IN ($1, $2)'
    assert rec.params == ("User", "AnonymousUser")
    assert parse_log_record("SELECT * FROM users  []").params == ()
    line = format_log_line("SELECT users.* FROM users WHERE users.username = $1", ["o'neil"])
    assert parse_log_record(line).params == ("o'neil",)


def test_bare_template_line():
    assert parse_log_record("SELECT * FROM users").params == ()


@pytest.mark.parametrize("line", ["SELECT * FROM users  [[1]", "SELECT * FROM users  [[]]", "   "])
def test_malformed_log_line(line):
    with pytest.raises(LogFormatError):
        parse_log_record(line)


def test_instantiate(schema):
    q = parse_template(REDMINE, schema)
    ground = instantiate(q, ["active", 2])
    assert render(ground).endswith("WHERE users.status = 'active' AND members.project_id = 2")
    zero = parse_template("SELECT * FROM users", schema)
    assert instantiate(zero, []) == zero


def test_arity_error_names_ordinal(schema):
    with pytest.raises(ArityError, match=r"\$2"):
        instantiate(parse_template(REDMINE, schema), ["active"])


def test_unsupported_constructs():
    with pytest.raises(UnsupportedQuery) as err:
        parse_query("SELECT a FROM t WHERE t.x IN (SELECT 1)")
    assert err.value.position == 30 and "subquery" in err.value.construct
    for sql in ("UPDATE t SET a = 1", "SELECT a FROM t LEFT JOIN u ON u.a = t.a RIGHT JOIN v ON v.a = t.a", "SELECT SUM(a) FROM t"):
        with pytest.raises(UnsupportedQuery):
            parse_query(sql)


def test_unknown_column(schema):
    with pytest.raises(ResolutionError):
        parse_template("SELECT users.nickname FROM users", schema)


def test_quoted_identifiers_are_stripped(schema):
    a = parse_template('SELECT "users".* FROM "users" WHERE "users"."username" = $1', schema)
    b = parse_template("SELECT users.* FROM users WHERE users.username = $1", schema)
    assert a == b


def test_unqualified_columns_resolve(schema):
    q = parse_template("SELECT username FROM users WHERE status = 'x'", schema)
    assert render(q) == "SELECT users.username FROM users WHERE users.status = 'x'"
