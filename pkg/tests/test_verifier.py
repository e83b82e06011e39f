import random
from collections import Counter

import pytest
from conftest import FIXTURES, model_sources
from mutations import MUTATIONS
from oracles import random_database, reference_evaluate
from support import app_constraints

from semopt.constraints import ConstraintSet, Uniqueness, all_hold, emit_checker_sql, schema_constraints
from semopt.extractor import extract_all
from semopt.rewriter import RewriteCandidate
from semopt.schema import load_schema
from semopt.sqlir import instantiate, parse_template
from semopt.sqlir.ir import params_of
from semopt.testbed.engine import evaluate
from semopt.verifier import (
    EquivalentUpToBound,
    InstanceSpace,
    NotEquivalent,
    Skipped,
    VerificationTask,
    replay_counterexample,
    verify_batch,
    verify_equivalence,
)

REDMINE = (
    "SELECT DISTINCT users.* FROM users INNER JOIN members ON members.user_id = users.id "
    "WHERE users.status = $1 AND (members.project_id = $2)"
)

# rewrites the pipeline certifies on the app fixture
SOUND = [
    (REDMINE, REDMINE.replace("DISTINCT ", "")),
    (
        "SELECT members.* FROM members INNER JOIN projects ON projects.id = members.project_id WHERE members.user_id = $1",
        "SELECT members.* FROM members WHERE members.user_id = $1",
    ),
    ("SELECT issues.* FROM issues WHERE issues.priority >= 1 AND issues.project_id = $1", "SELECT issues.* FROM issues WHERE issues.project_id = $1"),
    ("SELECT users.* FROM users WHERE users.username = $1", "SELECT users.* FROM users WHERE users.username = $1 LIMIT 1"),
    ("SELECT issues.id, issues.subject FROM issues WHERE issues.status = 'archived'", "SELECT issues.id, issues.subject FROM issues WHERE FALSE"),
]


@pytest.fixture(scope="module")
def redmine():
    schema = load_schema(FIXTURES / "redmine" / "schema.json")
    ext = extract_all(model_sources(FIXTURES / "redmine" / "models"), schema)
    return schema, ext.constraints | schema_constraints(schema)


@pytest.fixture(scope="module")
def app():
    schema = load_schema(FIXTURES / "app" / "schema.json")
    return schema, app_constraints(schema)


def ground(q, params):
    # a candidate may drop every parameter of the original
    return instantiate(q, params) if params_of(q) else q


def task(schema, cs, o, c, **kw):
    return VerificationTask(parse_template(o, schema), parse_template(c, schema), cs, schema, **kw)


def test_redmine_remove_distinct_is_equivalent(redmine):
    schema, cs = redmine
    v = verify_equivalence(task(schema, cs, REDMINE, REDMINE.replace("DISTINCT ", "")))
    assert isinstance(v, EquivalentUpToBound) and v.bound == 3 and v.instances > 0


def test_without_pair_uniqueness_a_two_row_witness(redmine):
    schema, cs = redmine
    weaker = ConstraintSet(c for c in cs if not (c.table == "members" and isinstance(c.kind, Uniqueness) and len(c.columns) == 2))
    v = verify_equivalence(task(schema, weaker, REDMINE, REDMINE.replace("DISTINCT ", ""), bound=2))
    assert isinstance(v, NotEquivalent)
    members = v.database.rows("members")
    assert len(members) == 2 and len({(m[1], m[2]) for m in members}) == 1
    assert replay_counterexample(v, parse_template(REDMINE, schema), parse_template(REDMINE.replace("DISTINCT ", ""), schema))


def test_where_false_refuted_with_one_row(app):
    schema, cs = app
    v = verify_equivalence(task(schema, cs, "SELECT projects.id FROM projects", "SELECT projects.id FROM projects WHERE FALSE"))
    assert isinstance(v, NotEquivalent)
    assert len(v.original_rows) >= 1 and v.candidate_rows == ()


@pytest.mark.parametrize("o,c", SOUND)
def test_sound_rewrites_verify(app, o, c):
    schema, cs = app
    assert isinstance(verify_equivalence(task(schema, cs, o, c)), EquivalentUpToBound)


@pytest.mark.parametrize("o,c", MUTATIONS)
def test_mutations_refuted_and_replayable(app, o, c):
    schema, cs = app
    orig, cand = parse_template(o, schema), parse_template(c, schema)
    v = verify_equivalence(VerificationTask(orig, cand, cs, schema, bound=3))
    assert isinstance(v, NotEquivalent)
    assert all_hold(cs, v.database.as_dicts())
    assert replay_counterexample(v, orig, cand) is not None
    # the reference evaluator sees the same difference
    og, cg = ground(orig, list(v.params)), ground(cand, list(v.params))
    ro, rc = reference_evaluate(og, v.database), reference_evaluate(cg, v.database)
    if cand.limit == 1 and orig.limit is None:
        assert len(ro) > 1
    else:
        assert Counter(ro) != Counter(rc)


@pytest.mark.parametrize("o,c", MUTATIONS[:8])
def test_refutation_is_monotone_in_bound(app, o, c):
    schema, cs = app
    for b in (2, 3, 4):
        if isinstance(verify_equivalence(task(schema, cs, o, c, bound=b - 1)), NotEquivalent):
            assert isinstance(verify_equivalence(task(schema, cs, o, c, bound=b)), NotEquivalent)


@pytest.mark.parametrize("o,c", SOUND)
def test_equivalent_verdicts_agree_with_reference(app, o, c):
    # random small databases that satisfy the constraints, evaluated by the reference
    schema, cs = app
    orig, cand = parse_template(o, schema), parse_template(c, schema)
    rng = random.Random(7)
    domains = {("users", "username"): ["ab", "cd", "ef_1"], ("users", "status"): ["active", "locked"],
               ("issues", "status"): ["new", "closed"], ("users", "type"): ["AnonymousUser"]}
    checked = 0
    for _ in range(3000):
        db = random_database(schema, rng, bound=3, domains=domains)
        if not all_hold(cs, db.as_dicts()):
            continue
        for params in ([("active"), 1], [1], ["ab"], []):
            try:
                og, cg = instantiate(orig, params), instantiate(cand, params)
            except Exception:
                continue
            ro, rc = reference_evaluate(og, db), reference_evaluate(cg, db)
            if cand.limit == 1 and orig.limit is None:
                assert len(ro) <= 1 and ro == rc
            else:
                assert Counter(ro) == Counter(rc)
            checked += 1
    assert checked > 50


def test_instances_pass_checker_sql(redmine):
    schema, cs = redmine
    space = InstanceSpace(task(schema, cs, REDMINE, REDMINE.replace("DISTINCT ", "")))
    checks = [parse_template(s, space.reduced_schema) for s in emit_checker_sql(
        [c for c in cs if all(space.reduced_schema.has_column(c.table, col) for col in c.columns)], space.reduced_schema)]
    n = 0
    for db in space.databases():
        for q in checks:
            assert evaluate(q, db) == []
        n += 1
        if n >= 500:
            break
    assert n > 0


def test_ceiling_skips(redmine):
    schema, cs = redmine
    v = verify_equivalence(task(schema, cs, REDMINE, REDMINE.replace("DISTINCT ", ""), ceiling=10))
    assert isinstance(v, Skipped) and v.reason == "too-large" and v.estimate > 10


def test_task_invariants(redmine):
    schema, cs = redmine
    with pytest.raises(ValueError):
        task(schema, cs, REDMINE, REDMINE, bound=0)
    with pytest.raises(ValueError):
        task(schema, cs, REDMINE, REDMINE, symbols=1)


def test_batch_prefers_cheapest_equivalent(redmine):
    schema, cs = redmine
    orig = parse_template(REDMINE, schema)
    base = REDMINE.replace("DISTINCT ", "")
    cands = [
        RewriteCandidate(parse_template(base, schema), ("RD",), 10.0),
        RewriteCandidate(parse_template(REDMINE + " LIMIT 1", schema), ("AL",), 8.0),
        RewriteCandidate(parse_template(base + " LIMIT 1", schema), ("RD", "AL"), 5.0),
    ]
    res = verify_batch(orig, cands, cs, schema)
    assert [c.trace for c, _ in res.verdicts] == [("RD", "AL"), ("AL",), ("RD",)]
    assert res.chosen.trace == ("RD",)
    assert verify_batch(orig, [], cs, schema).chosen is None


def test_batch_all_skipped(redmine):
    schema, cs = redmine
    orig = parse_template(REDMINE, schema)
    cand = RewriteCandidate(parse_template(REDMINE.replace("DISTINCT ", ""), schema), ("RD",))
    res = verify_batch(orig, [cand], cs, schema, ceiling=1)
    assert res.chosen is None and isinstance(res.verdicts[0][1], Skipped)
