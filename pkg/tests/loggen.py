"""Seeded query-log generator over the app fixture."""

from __future__ import annotations

import random

from semopt.sqlir import format_log_line

TEMPLATES = [
    (
        "SELECT DISTINCT users.* FROM users INNER JOIN members ON members.user_id = users.id "
        "WHERE users.status = $1 AND (members.project_id = $2)",
        lambda r: [r.choice(["active", "registered", "locked"]), r.randint(1, 40)],
    ),
    (
        'SELECT "users".* FROM "users" WHERE "users"."username" = $1',
        lambda r: [r.choice(["ben", "jess_l33t", "x", "ab#c", "o'neil", "a" * 31, "Zed_9"])],
    ),
    ('SELECT COUNT(*) FROM "users" WHERE "users"."type" IN ($1, $2)', lambda r: ["User", "AnonymousUser"]),
    ("SELECT issues.* FROM issues WHERE issues.priority >= 1 AND issues.project_id = $1", lambda r: [r.randint(1, 40)]),
    ("SELECT issues.id, issues.subject FROM issues WHERE issues.status = 'archived'", lambda r: []),
    (
        "SELECT members.* FROM members INNER JOIN projects ON projects.id = members.project_id WHERE members.user_id = $1",
        lambda r: [r.randint(1, 60)],
    ),
    ("SELECT projects.* FROM projects WHERE projects.status > $1 ORDER BY projects.id", lambda r: [r.randint(0, 9)]),
    ("SELECT issues.* FROM issues WHERE issues.project_id IN (SELECT id FROM projects)", lambda r: []),
]


def app_log_lines(n: int, seed: int = 0) -> list[str]:
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        template, gen = rng.choice(TEMPLATES)
        out.append(format_log_line(template, gen(rng)))
    return out
