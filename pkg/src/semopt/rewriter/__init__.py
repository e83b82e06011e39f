"""Candidate rewrite enumeration driven by data constraints."""

from .enumerate import (
    DEFAULT_THRESHOLD,
    Enumeration,
    RewriteCandidate,
    RewriteRule,
    applicable_rules,
    constraints_on_used_fields,
    enumerate_rewrites,
)
from .intervals import Interval, derive_intervals
from .rules import (
    apply_add_limit_one,
    apply_empty_set_detection,
    apply_join_elimination,
    apply_predicate_elimination,
    apply_predicate_introduction,
    apply_remove_distinct,
)

__all__ = [
    "DEFAULT_THRESHOLD",
    "Enumeration",
    "Interval",
    "RewriteCandidate",
    "RewriteRule",
    "applicable_rules",
    "constraints_on_used_fields",
    "apply_add_limit_one",
    "apply_empty_set_detection",
    "apply_join_elimination",
    "apply_predicate_elimination",
    "apply_predicate_introduction",
    "apply_remove_distinct",
    "derive_intervals",
    "enumerate_rewrites",
]
