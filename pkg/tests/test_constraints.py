import json

import pytest

from semopt.constraints import (
    Bound,
    Constraint,
    ConstraintError,
    ConstraintSet,
    ForeignKey,
    Format,
    Inclusion,
    Length,
    Numerical,
    Pattern,
    Presence,
    Uniqueness,
    emit_checker_sql,
    holds,
    load_constraints,
    merge_constraint_sets,
    schema_constraints,
    sql_literal,
    validate_against_schema,
    write_constraints,
)
from semopt.schema import make_schema
from semopt.sqlir import parse_template
from semopt.testbed.database import database_from_rows
from semopt.testbed.engine import evaluate

USERS = make_schema(
    {
        "users": [("id", "integer", False, True), ("email", "text"), ("age", "integer"), ("name", "text")],
        "members": [("id", "integer", False, True), ("user_id", "integer"), ("project_id", "integer")],
    }
)


def one(table, col, kind, source="builtin-validation"):
    cols = col if isinstance(col, tuple) else (col,)
    return ConstraintSet([Constraint(table, cols, kind, source)])


def test_merge_inclusion_intersection():
    (c,) = merge_constraint_sets([one("t", "f", Inclusion(("A", "B", "C"))), one("t", "f", Inclusion(("B", "C", "D")))])
    assert c.kind.values == ("B", "C") and c.source == "merged"


def test_merge_numerical_intersection():
    a = one("t", "f", Numerical(Bound(1, True), Bound(10, True)))
    b = one("t", "f", Numerical(Bound(0, True), Bound(5, True)))
    (c,) = merge_constraint_sets([a, b])
    assert c.kind == Numerical(Bound(1, True), Bound(5, True))


def test_merge_drops_non_unanimous_uniqueness():
    a = one("t", "f", Uniqueness()) | one("t", "g", Presence())
    b = one("t", "g", Presence())
    merged = merge_constraint_sets([a, b])
    assert [(c.column, c.kind) for c in merged] == [("g", Presence())]


def test_merge_flags_empty_intersections():
    (inc,) = merge_constraint_sets([one("t", "f", Inclusion(("A",))), one("t", "f", Inclusion(("B",)))])
    assert inc.kind.unsatisfiable and inc.to_dict()["params"]["unsatisfiable"] is True
    (ln,) = merge_constraint_sets([one("t", "f", Length(min=5)), one("t", "f", Length(max=3))])
    assert ln.kind.unsatisfiable


def test_merge_format_conjunction():
    a = one("t", "f", Format((Pattern(r"\A\w+\z"),)))
    b = one("t", "f", Format((Pattern(r"@"),)))
    (c,) = merge_constraint_sets([a, b])
    assert len(c.kind.patterns) == 2
    assert c.kind.matches("a@") is False and c.kind.matches("ab") is False


def test_merge_single_set_unchanged():
    a = one("t", "f", Presence())
    assert merge_constraint_sets([a]) is a
    with pytest.raises(ConstraintError):
        merge_constraint_sets([])


def test_constraint_invariants():
    with pytest.raises(ConstraintError):
        Inclusion(("a", "a"))
    with pytest.raises(ConstraintError):
        Constraint("t", (), Presence())
    with pytest.raises(ConstraintError):
        Constraint("t", ("a", "b"), Presence())
    with pytest.raises(ConstraintError):
        Constraint("t", ("a",), Presence(), "guess")


def test_canonical_json_round_trip(tmp_path):
    cs = one("users", "age", Numerical(lower=Bound(0, True))) | one("members", ("user_id", "project_id"), Uniqueness())
    path = tmp_path / "c.json"
    write_constraints(cs, path)
    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n")
    assert load_constraints(path) == cs
    assert json.dumps(json.loads(text), indent=2, sort_keys=True, ensure_ascii=False) + "\n" == text
    assert text == cs.to_json()


def test_checker_examples():
    cs = (
        one("users", "email", Presence())
        | one("members", ("user_id", "project_id"), Uniqueness())
        | one("users", "age", Numerical(lower=Bound(0, True)))
    )
    assert emit_checker_sql(cs, USERS) == [
        "SELECT user_id, project_id FROM members GROUP BY user_id, project_id HAVING COUNT(*) > 1;",
        "SELECT * FROM users WHERE NOT (age >= 0);",
        "SELECT * FROM users WHERE email IS NULL;",
    ]


def test_checker_sorted_and_uncheckable():
    cs = one("users", "name", Format((Pattern(r"\A\p{L}+\z"),))) | one("users", "email", Length(1, 5))
    out = emit_checker_sql(cs, USERS)
    assert out[0].startswith("SELECT * FROM users WHERE NOT (char_length(email)")
    assert out[1].startswith("-- UNCHECKABLE users.name format")


@pytest.mark.parametrize(
    "kind,col,good,bad",
    [
        (Uniqueness(), ("user_id", "project_id"), [(1, 1, 1), (2, 1, 2)], [(1, 1, 1), (2, 1, 1)]),
        (Presence(), ("user_id",), [(1, 1, 1)], [(1, None, 1)]),
        (Numerical(Bound(0, True), Bound(5, False)), ("project_id",), [(1, 1, 0), (2, 1, None)], [(1, 1, 5)]),
        (Inclusion((1, 2)), ("user_id",), [(1, 2, 0)], [(1, 3, 0)]),
    ],
)
def test_checker_on_satisfying_and_violating_tables(kind, col, good, bad):
    cs = one("members", col, kind)
    (sql,) = emit_checker_sql(cs, USERS)
    q = parse_template(sql, USERS)
    for rows, expect_empty in ((good, True), (bad, False)):
        db = database_from_rows(USERS, {"users": [], "members": rows})
        assert (evaluate(q, db) == []) is expect_empty
        assert all(holds(c, db.as_dicts()) for c in cs) is expect_empty


def test_sql_literal_quoting():
    assert sql_literal("o'neil") == "'o''neil'"
    assert sql_literal(None) == "NULL"
    assert sql_literal(True) == "TRUE"
    assert sql_literal(3) == "3"


def test_validate_against_schema():
    assert validate_against_schema(one("users", "name", Presence()), USERS) == []
    errs = validate_against_schema(one("users", "nickname", Presence()), USERS)
    assert [str(e) for e in errs] == ["unresolved-column(users.nickname)"]
    schema = make_schema({"wikipages": [("id", "integer", False, True), ("project_id", "integer")]})
    errs = validate_against_schema(one("wikipages", "project_id", ForeignKey("projects", "id")), schema)
    assert [str(e) for e in errs] == ["unresolved-table(projects)"]


def test_schema_constraints_from_declarations():
    schema = make_schema(
        {"p": [("id", "integer", False, True)], "c": [("id", "integer", False, True), ("p_id", "integer", False)]},
        declared=[{"table": "c", "columns": ["p_id"], "kind": "foreign_key", "params": {"ref_table": "p", "ref_column": "id"}}],
    )
    cs = schema_constraints(schema)
    assert {(c.table, c.kind.name) for c in cs} >= {("p", "uniqueness"), ("c", "presence"), ("c", "foreign_key")}
    assert all(c.source == "db-declared" for c in cs)
