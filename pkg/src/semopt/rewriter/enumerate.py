"""Rule selection and breadth-first enumeration of candidate rewrites."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..constraints import Constraint, ConstraintSet, ForeignKey, Numerical, Presence, Uniqueness
from ..schema import Schema
from ..sqlir.ir import Query
from ..sqlir.render import render
from ..sqlir.template import extract_used_fields, fingerprint
from .rules import RULE_NAMES, RULE_ORDER, RULES

DEFAULT_THRESHOLD = 200

# constraint categories that trigger each rule
TRIGGERS: dict[str, tuple[tuple[type, ...], ...]] = {
    "RD": ((Uniqueness,),),
    "AL": ((Uniqueness,),),
    "PE": ((Numerical,), (Presence,)),
    "PI": ((Numerical,),),
    "JE": ((ForeignKey, Presence),),  # both, on the same column
    "ES": ((Numerical,), (Presence,)),
}


@dataclass(frozen=True)
class RewriteRule:
    code: str
    triggers: tuple[Constraint, ...]

    @property
    def name(self) -> str:
        return RULE_NAMES[self.code]


@dataclass(frozen=True)
class RewriteCandidate:
    template: Query
    trace: tuple[str, ...]
    est_cost: float | None = None

    @property
    def trace_string(self) -> str:
        return "+".join(self.trace)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.template)


@dataclass
class Enumeration:
    original: Query
    candidates: list[RewriteCandidate] = field(default_factory=list)
    rules: list[RewriteRule] = field(default_factory=list)
    truncated: bool = False

    def dump(self) -> str:
        return "".join(f"{c.trace_string} {render(c.template)}\n" for c in self.candidates)


def constraints_on_used_fields(q: Query, schema: Schema, cs: ConstraintSet) -> list[Constraint]:
    used = extract_used_fields(q, schema)
    return [c for c in cs if any((c.table, col) in used for col in c.columns)]


def applicable_rules(q: Query, schema: Schema, cs: ConstraintSet) -> list[RewriteRule]:
    relevant = constraints_on_used_fields(q, schema, cs)
    rules = []
    for code in RULE_ORDER:
        hits: list[Constraint] = []
        for combo in TRIGGERS[code]:
            if len(combo) == 1:
                kind = combo[0]
                hits.extend(
                    c for c in relevant if isinstance(c.kind, kind) and not (kind is Uniqueness and c.conditional)
                )
            else:
                by_col: dict[tuple, list[Constraint]] = {}
                for c in relevant:
                    by_col.setdefault((c.table, c.columns), []).append(c)
                for group in by_col.values():
                    if all(any(isinstance(c.kind, k) for c in group) for k in combo):
                        hits.extend(c for c in group if isinstance(c.kind, combo))
        if hits:
            rules.append(RewriteRule(code, tuple(dict.fromkeys(hits))))
    return rules


def enumerate_rewrites(
    q: Query, schema: Schema, cs: ConstraintSet, threshold: int = DEFAULT_THRESHOLD
) -> Enumeration:
    """Apply one rule kind per BFS layer to every candidate found so far.

    The original query is the seed of each layer but is not part of the
    output. Candidates are deduplicated by fingerprint; enumeration stops at
    ``threshold`` candidates and then flags the result as truncated.
    """
    if threshold < 1:
        raise ValueError("threshold must be at least 1")
    result = Enumeration(q, rules=applicable_rules(q, schema, cs))
    seen = {fingerprint(q)}
    pool = [RewriteCandidate(q, ())]
    for rule in result.rules:
        impl = RULES[rule.code]
        layer: dict[str, RewriteCandidate] = {}
        for cand in pool:
            for new in impl.apply(cand.template, schema, cs):
                fp = fingerprint(new)
                if fp in seen or fp in layer:
                    continue
                layer[fp] = RewriteCandidate(new, cand.trace + (rule.code,))
        for fp in sorted(layer):
            if len(result.candidates) >= threshold:
                result.truncated = True
                return result
            seen.add(fp)
            result.candidates.append(layer[fp])
            pool.append(layer[fp])
    return result
