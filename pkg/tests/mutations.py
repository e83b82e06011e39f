"""Hand-built unsound rewrites over the app fixture.

Each pair is (original, candidate) where the candidate differs from the
original on some database that satisfies the app's constraints.
"""

# DISTINCT removed where nothing makes the projected rows unique
DISTINCT_DROPS = [
    ("SELECT DISTINCT users.status FROM users", "SELECT users.status FROM users"),
    ("SELECT DISTINCT users.type FROM users WHERE users.status = $1", "SELECT users.type FROM users WHERE users.status = $1"),
    ("SELECT DISTINCT members.user_id FROM members", "SELECT members.user_id FROM members"),
    (
        "SELECT DISTINCT members.project_id FROM members WHERE members.user_id > $1",
        "SELECT members.project_id FROM members WHERE members.user_id > $1",
    ),
    ("SELECT DISTINCT issues.priority FROM issues WHERE issues.project_id = $1", "SELECT issues.priority FROM issues WHERE issues.project_id = $1"),
    (
        "SELECT DISTINCT projects.* FROM projects INNER JOIN issues ON issues.project_id = projects.id",
        "SELECT projects.* FROM projects INNER JOIN issues ON issues.project_id = projects.id",
    ),
    (
        "SELECT DISTINCT users.username FROM users INNER JOIN members ON members.user_id = users.id",
        "SELECT users.username FROM users INNER JOIN members ON members.user_id = users.id",
    ),
    ("SELECT DISTINCT projects.name FROM projects", "SELECT projects.name FROM projects"),
]

# joins dropped although the joined row need not exist, or may match several times
JOIN_DROPS = [
    (
        "SELECT users.* FROM users INNER JOIN members ON members.user_id = users.id",
        "SELECT users.* FROM users",
    ),
    (
        "SELECT projects.id FROM projects INNER JOIN issues ON issues.project_id = projects.id WHERE projects.status = $1",
        "SELECT projects.id FROM projects WHERE projects.status = $1",
    ),
    (
        "SELECT users.username FROM users INNER JOIN members ON members.user_id = users.id WHERE members.project_id = $1",
        "SELECT users.username FROM users",
    ),
    (
        "SELECT projects.name FROM projects INNER JOIN members ON members.project_id = projects.id",
        "SELECT projects.name FROM projects",
    ),
    (
        "SELECT issues.subject FROM issues INNER JOIN projects ON projects.id = issues.project_id WHERE projects.status > $1",
        "SELECT issues.subject FROM issues",
    ),
]

# predicates dropped that the constraints do not imply
PREDICATE_DROPS = [
    ("SELECT users.* FROM users WHERE users.status = $1", "SELECT users.* FROM users"),
    ("SELECT issues.id FROM issues WHERE issues.priority >= 2", "SELECT issues.id FROM issues"),
    ("SELECT issues.id FROM issues WHERE issues.priority < 5 AND issues.project_id = $1", "SELECT issues.id FROM issues WHERE issues.project_id = $1"),
    ("SELECT projects.* FROM projects WHERE projects.status <= 8", "SELECT projects.* FROM projects"),
    ("SELECT users.id FROM users WHERE users.status = 'active' AND users.id > 2", "SELECT users.id FROM users WHERE users.status = 'active'"),
    ("SELECT issues.* FROM issues WHERE issues.status IS NOT NULL", "SELECT issues.* FROM issues"),
    ("SELECT members.id FROM members WHERE members.project_id = $1", "SELECT members.id FROM members"),
]

# other unsound shortcuts: LIMIT 1 without uniqueness, empty result without contradiction
OTHER = [
    ("SELECT users.* FROM users WHERE users.status = $1", "SELECT users.* FROM users WHERE users.status = $1 LIMIT 1"),
    ("SELECT members.* FROM members WHERE members.user_id = $1", "SELECT members.* FROM members WHERE members.user_id = $1 LIMIT 1"),
    ("SELECT issues.id FROM issues WHERE issues.priority = 5", "SELECT issues.id FROM issues WHERE FALSE"),
]

MUTATIONS = DISTINCT_DROPS + JOIN_DROPS + PREDICATE_DROPS + OTHER
