"""Constraint extraction from a parsed model AST.

Extraction runs two passes over the AST. The first collects data
validations (built-in and custom); the second collects class relationships
and field definitions (table inheritance, polymorphic interfaces, has_one
associations, state machines). Each pass visits every node exactly once and
only gathers raw facts; resolving class names to tables and fields to columns
happens afterwards against the schema.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from typing import Any, Iterable, TextIO

from ..constraints import (
    Bound,
    Condition,
    Constraint,
    ConstraintSet,
    Format,
    Inclusion,
    Length,
    Numerical,
    Pattern,
    Presence,
    Uniqueness,
)
from ..regex import split_ruby_literal
from ..schema import NUMERIC_TYPES, Schema
from .ast import (
    Association,
    BuiltinValidation,
    ClassDef,
    CustomValidatorRegistration,
    ErrorAdd,
    IfStmt,
    Lambda,
    MethodDef,
    ModelAst,
    Node,
    RangeLit,
    Regex,
    Setting,
    StateMachineBlock,
    Symbol,
    Transition,
    is_literal,
    scalar,
)
from .cond import condition_fields, negate
from .parser import parse_model_files
from .values import LiteralError, ValueParser

BASE_CLASSES = ("ActiveRecord::Base", "ApplicationRecord")
CONDITIONAL_OPTIONS = ("if", "unless", "on")
_IRREGULAR = {"person": "people", "child": "children", "man": "men", "woman": "women", "status": "statuses"}


@dataclass(frozen=True)
class Diagnostic:
    level: str  # ERROR, WARN or INFO
    file: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.level} {self.file}:{self.line} {self.message}"


@dataclass
class Extraction:
    constraints: ConstraintSet
    diagnostics: list[Diagnostic] = field(default_factory=list)
    missed: int = 0
    opaque: int = 0
    node_count: int = 0
    visits: tuple[int, ...] = ()

    def report(self, stream: TextIO | None = None) -> None:
        stream = stream if stream is not None else sys.stderr
        for d in self.diagnostics:
            print(d, file=stream)


# -- inflection ------------------------------------------------------------------


def underscore(name: str) -> str:
    name = name.split("::")[-1]
    s = re.sub(r"([A-Z]+)([A-Z][a-z])", r"\1_\2", name)
    s = re.sub(r"([a-z\d])([A-Z])", r"\1_\2", s)
    return s.lower()


def pluralize(word: str) -> str:
    if word in _IRREGULAR:
        return _IRREGULAR[word]
    if re.search(r"[^aeiou]y$", word):
        return word[:-1] + "ies"
    if re.search(r"(s|x|z|ch|sh)$", word):
        return word + "es"
    return word + "s"


def singularize(word: str) -> str:
    for sing, plur in _IRREGULAR.items():
        if word == plur:
            return sing
    if word.endswith("ies"):
        return word[:-3] + "y"
    if re.search(r"(s|x|z|ch|sh)es$", word):
        return word[:-2]
    if word.endswith("s") and not word.endswith("ss"):
        return word[:-1]
    return word


def camelize(word: str) -> str:
    return "".join(p[:1].upper() + p[1:] for p in word.split("_"))


def table_candidates(class_name: str) -> list[str]:
    """``WikiPage`` -> ``["wiki_pages", "wikipages"]``."""
    snake = underscore(class_name)
    parts = snake.split("_")
    snake_plural = "_".join(parts[:-1] + [pluralize(parts[-1])])
    joined = pluralize("".join(parts))
    return list(dict.fromkeys([snake_plural, joined]))


# -- raw facts -------------------------------------------------------------------------


@dataclass
class _Raw:
    """A constraint whose table and columns are still class and field names."""

    cls: str
    fields: tuple[str, ...]
    kind: Any
    source: str
    file: str
    line: int


@dataclass
class _ClassFacts:
    node: ClassDef
    settings: dict[str, Any] = field(default_factory=dict)
    associations: list[Association] = field(default_factory=list)
    registrations: list[CustomValidatorRegistration] = field(default_factory=list)


class _Collector:
    def __init__(self) -> None:
        self.raw: list[_Raw] = []
        self.diagnostics: list[Diagnostic] = []
        self.missed = 0
        self.classes: dict[str, _ClassFacts] = {}
        self.order: list[str] = []
        self.errors_in: dict[tuple[str, str], list[tuple[IfStmt, int]]] = {}
        self.machines: list[tuple[str, StateMachineBlock, list[Any]]] = []
        self.visits = [0, 0]

    def diag(self, level: str, file: str, line: int, message: str) -> None:
        self.diagnostics.append(Diagnostic(level, file, line, message))

    def miss(self, file: str, line: int, message: str) -> None:
        self.missed += 1
        self.diag("INFO", file, line, f"missed: {message}")

    # -- pass 1: data validations --

    def validations_pass(self, ast: ModelAst) -> None:
        for cls in ast.classes:
            if cls.name in self.classes:
                self.diag("WARN", cls.file, cls.line, f"class {cls.name} defined again; merging statements")
            else:
                self.classes[cls.name] = _ClassFacts(cls)
                self.order.append(cls.name)
            self._visit1(cls, cls, None, depth=0)

    def _visit1(self, node: Node, cls: ClassDef, method: str | None, depth: int) -> None:
        self.visits[0] += 1
        facts = self.classes[cls.name]
        if isinstance(node, BuiltinValidation):
            self._builtin(cls, node)
        elif isinstance(node, CustomValidatorRegistration):
            facts.registrations.append(node)
        elif isinstance(node, Setting) and node.name == "table_name":
            facts.settings["table_name"] = node.value
        elif isinstance(node, IfStmt) and method is not None:
            if any(isinstance(n, ErrorAdd) for n in node.body):
                self.errors_in.setdefault((cls.name, method), []).append((node, depth))
            if any(isinstance(n, ErrorAdd) for n in node.orelse):
                self.miss(cls.file, node.line, "error raised in an else branch")
        if isinstance(node, MethodDef):
            method = node.name
        for child in node.children():
            inner = depth + 1 if isinstance(node, IfStmt) else depth
            self._visit1(child, cls, method, inner)

    def _builtin(self, cls: ClassDef, v: BuiltinValidation) -> None:
        opts = v.options
        if any(k in opts for k in CONDITIONAL_OPTIONS):
            self.miss(cls.file, v.line, f"{v.api} applies conditionally")
            return
        if v.api == "validates":
            for rule, arg in opts.items():
                if isinstance(arg, dict) and any(k in arg for k in CONDITIONAL_OPTIONS):
                    self.miss(cls.file, v.line, f"validates {rule} applies conditionally")
                    continue
                self._rule(cls, v, rule, arg, opts)
            return
        rule = v.api[len("validates_") : -len("_of")]
        self._rule(cls, v, rule, opts, opts)

    def _rule(self, cls: ClassDef, v: BuiltinValidation, rule: str, arg: Any, outer: dict) -> None:
        """One validation rule; ``arg`` holds its options (or a shorthand value)."""
        add = lambda fields, kind: self.raw.append(  # noqa: E731
            _Raw(cls.name, tuple(fields), kind, "builtin-validation", cls.file, v.line)
        )
        opts = arg if isinstance(arg, dict) else {}
        if arg is False or arg is None:
            return
        if rule == "presence":
            for f in v.fields:
                add([f], Presence())
        elif rule == "uniqueness":
            scope = opts.get("scope", [])
            scope = [str(scalar(s)) for s in (scope if isinstance(scope, list) else [scope])]
            if "conditions" in opts:
                self.miss(cls.file, v.line, "uniqueness with conditions")
                return
            for f in v.fields:
                add([f] + scope, Uniqueness())
        elif rule == "inclusion":
            values = opts.get("in", opts.get("within")) if isinstance(arg, dict) else arg
            kind = _inclusion_kind(values)
            if kind is None:
                self.miss(cls.file, v.line, "inclusion list is not literal")
                return
            for f in v.fields:
                add([f], kind)
        elif rule in ("length", "size"):
            kind = _length_kind(opts if isinstance(arg, dict) else {}, outer)
            if kind is None:
                self.miss(cls.file, v.line, f"{rule} without literal bounds")
                return
            for f in v.fields:
                add([f], kind)
        elif rule == "format":
            pattern = opts.get("with") if isinstance(arg, dict) else arg
            if isinstance(pattern, Regex):
                pat = Pattern(pattern.source, pattern.flags)
            elif isinstance(pattern, str):
                pat = Pattern(*split_ruby_literal(pattern))
            else:
                self.miss(cls.file, v.line, "format without a literal pattern")
                return
            for f in v.fields:
                add([f], Format((pat,)))
        elif rule == "numericality":
            kind = _numerical_kind(opts)
            if kind is False:
                self.miss(cls.file, v.line, "numericality with non-literal bounds")
            elif kind is not None:
                for f in v.fields:
                    add([f], kind)
        elif rule not in ("allow_nil", "allow_blank", "message", "strict"):
            self.miss(cls.file, v.line, f"unsupported validation {rule}")

    # -- pass 2: class relationships and field definitions --

    def relations_pass(self, ast: ModelAst) -> None:
        for cls in ast.classes:
            self._visit2(cls, cls, None)

    def _visit2(self, node: Node, cls: ClassDef, state: list | None) -> None:
        self.visits[1] += 1
        facts = self.classes[cls.name]
        if isinstance(node, Association):
            facts.associations.append(node)
        elif isinstance(node, Setting) and node.name in ("inheritance_column", "abstract_class"):
            facts.settings[node.name] = node.value
        elif isinstance(node, StateMachineBlock):
            state = [node.initial] if node.initial is not None else []
            self.machines.append((cls.name, node, state))
        elif isinstance(node, Transition) and state is not None:
            state.extend(node.sources)
            state.append(node.target)
        for child in node.children():
            self._visit2(child, cls, state)

    # -- custom validations (post-pass) --

    def custom(self) -> None:
        for name in self.order:
            facts = self.classes[name]
            cls = facts.node
            for reg in facts.registrations:
                branches = self.errors_in.get((name, reg.method))
                if branches is None:
                    if not any(isinstance(s, MethodDef) and s.name == reg.method for s in cls.statements):
                        self.diag("WARN", cls.file, reg.line, f"validator {reg.method} has no definition in {name}")
                    continue
                for ifnode, depth in branches:
                    if depth > 0:
                        self.miss(cls.file, ifnode.line, "error raised under nested conditions")
                        continue
                    if ifnode.cond is None:
                        self.miss(cls.file, ifnode.line, f"condition outside the grammar: {ifnode.text}")
                        continue
                    neg = negate(ifnode.cond)
                    for _ in range(neg.missed):
                        self.miss(cls.file, ifnode.line, f"condition does not negate to a constraint: {ifnode.text}")
                    fields = condition_fields(ifnode.cond)
                    for d in neg.derived:
                        self.raw.append(_Raw(name, (d.field,), d.kind, "custom-validation", cls.file, ifnode.line))
                    if not fields:
                        self.miss(cls.file, ifnode.line, "condition references no field")


def _inclusion_kind(values: Any):
    if isinstance(values, RangeLit):
        lo, hi = values.low, values.high
        if isinstance(lo, (int, float)) and isinstance(hi, (int, float)) and not isinstance(lo, bool):
            if isinstance(lo, int) and isinstance(hi, int) and hi - lo <= 20:
                top = hi - 1 if values.exclusive else hi
                return Inclusion(tuple(range(lo, top + 1)))
            return Numerical(lower=Bound(lo, True), upper=Bound(hi, not values.exclusive))
        return None
    if not isinstance(values, list) or not values or not is_literal(values):
        return None
    out: list = []
    for v in values:
        v = scalar(v)
        if v is None or isinstance(v, (list, dict)):
            return None
        if v not in out:
            out.append(v)
    return Inclusion(tuple(out))


def _length_kind(opts: dict, outer: dict):
    lo = hi = None
    if "is" in opts:
        lo = hi = opts["is"]
    for key in ("in", "within"):
        r = opts.get(key)
        if isinstance(r, RangeLit):
            lo, hi = r.low, (r.high - 1 if r.exclusive and isinstance(r.high, int) else r.high)
    lo = opts.get("minimum", lo)
    hi = opts.get("maximum", hi)
    if not all(x is None or (isinstance(x, int) and not isinstance(x, bool)) for x in (lo, hi)):
        return None
    if lo is None and hi is None:
        return None
    if opts.get("allow_blank") or outer.get("allow_blank"):
        lo = None  # blank strings pass the validation
        if hi is None:
            return None
    return Length(min=lo, max=hi)


def _numerical_kind(opts: dict):
    keys = {
        "greater_than": ("lower", False),
        "greater_than_or_equal_to": ("lower", True),
        "less_than": ("upper", False),
        "less_than_or_equal_to": ("upper", True),
    }
    lower = upper = equal = None
    seen = False
    for key, (side, inclusive) in keys.items():
        if key not in opts:
            continue
        v = opts[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False
        seen = True
        if side == "lower":
            lower = Bound(v, inclusive)
        else:
            upper = Bound(v, inclusive)
    if "equal_to" in opts:
        v = opts["equal_to"]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False
        equal = v
        seen = True
    if not seen:
        return None
    return Numerical(lower=lower, upper=upper, equal=equal)


# -- resolution against the schema ---------------------------------------------------


class _Resolver:
    def __init__(self, col: _Collector, schema: Schema) -> None:
        self.c = col
        self.schema = schema
        self._tables: dict[str, str | None] = {}

    def is_abstract(self, name: str) -> bool:
        facts = self.c.classes.get(name)
        return bool(facts and facts.settings.get("abstract_class") is True)

    def parent(self, name: str) -> str | None:
        """The model class ``name`` inherits a table from, if any."""
        facts = self.c.classes[name]
        sup = facts.node.superclass
        if sup is None:
            return None
        for cand in (sup, sup.split("::")[-1]):
            if cand in self.c.classes and not self.is_abstract(cand):
                return cand
        return None

    def root(self, name: str) -> str:
        seen = {name}
        while (p := self.parent(name)) is not None and p not in seen:
            seen.add(p)
            name = p
        return name

    def table(self, name: str) -> str | None:
        if name in self._tables:
            return self._tables[name]
        facts = self.c.classes.get(name)
        result: str | None
        if facts is None or self.is_abstract(name):
            result = None
        elif "table_name" in facts.settings:
            result = str(facts.settings["table_name"])
        elif self.root(name) != name:
            result = self.table(self.root(name))
        else:
            cands = table_candidates(name)
            result = next((t for t in cands if self.schema.has_table(t)), cands[0])
        self._tables[name] = result
        return result

    def column(self, cls: str, field_name: str) -> str:
        """Map a field name to a column; association names map to their key."""
        table = self.table(cls)
        if table and self.schema.has_column(table, field_name):
            return field_name
        for a in self.c.classes[cls].associations:
            if a.kind == "belongs_to" and a.target == field_name:
                return str(scalar(a.options.get("foreign_key", f"{field_name}_id")))
        return field_name

    def target_class(self, a: Association) -> str:
        if "class_name" in a.options:
            return str(scalar(a.options["class_name"]))
        name = a.target
        if a.kind == "has_many":
            name = singularize(name)
        elif a.kind == "has_one" and "as" in a.options:
            name = singularize(name)
        return camelize(name)


def _check_kind(schema: Schema, table: str, column: str, kind) -> str | None:
    typ = schema.column(table, column).type
    if isinstance(kind, Length) and typ not in ("text", "enum"):
        return f"length constraint on non-text column {table}.{column}"
    if isinstance(kind, Numerical) and typ not in NUMERIC_TYPES:
        return f"numerical constraint on non-numeric column {table}.{column}"
    if isinstance(kind, Format) and typ not in ("text", "enum"):
        return f"format constraint on non-text column {table}.{column}"
    return None


_WHERE_HASH = re.compile(r"^where\s*\(?\s*(\w+):\s*(.+?)\s*\)?$")
_WHERE_STR = re.compile(r"""^where\s*\(?\s*["'](\w+)\s*(=|<>|!=|<=|>=|<|>)\s*(.+?)["']\s*\)?$""")


def _scope_condition(scope: Lambda | None) -> Condition | None | bool:
    """Condition for a has_one scope; False when the scope is not understood."""
    if scope is None:
        return None
    body = scope.body.strip()
    m = _WHERE_HASH.match(body)
    if m:
        raw = m.group(2).strip()
        value = _literal(raw)
        return Condition(m.group(1), "=", value) if value is not _NO else False
    m = _WHERE_STR.match(body)
    if m:
        value = _literal(m.group(3).strip())
        return Condition(m.group(1), m.group(2), value) if value is not _NO else False
    return False


_NO = object()


def _literal(raw: str):
    try:
        p = ValueParser(raw)
        v = p.value()
        if not p.at_end():
            return _NO
    except LiteralError:
        return _NO
    v = scalar(v)
    if isinstance(v, (str, int, float, bool)):
        return v
    return _NO


def _run_passes(ast: ModelAst) -> _Collector:
    col = _Collector()
    col.validations_pass(ast)
    col.relations_pass(ast)
    col.custom()
    return col


def _relations(col: _Collector, res: _Resolver) -> None:
    classes = col.classes
    # single-table inheritance: one constraint per hierarchy root
    children: dict[str, list[str]] = {}
    for name in col.order:
        p = res.parent(name)
        if p is not None:
            children.setdefault(p, []).append(name)
    for root in col.order:
        if res.parent(root) is not None or root not in children:
            continue
        descendants: list[str] = []
        queue = list(children[root])
        while queue:
            n = queue.pop(0)
            if n in descendants:
                continue
            descendants.append(n)
            queue.extend(children.get(n, []))
        facts = classes[root]
        disc = str(facts.settings.get("inheritance_column", "type"))
        col.raw.append(
            _Raw(root, (disc,), Inclusion(tuple(descendants)), "inheritance", facts.node.file, facts.node.line)
        )

    # polymorphic interfaces
    for name in col.order:
        facts = classes[name]
        for a in facts.associations:
            if a.kind != "belongs_to" or a.options.get("polymorphic") is not True:
                continue
            members = []
            for other in col.order:
                for b in classes[other].associations:
                    if b.kind in ("has_one", "has_many") and scalar(b.options.get("as")) == a.target:
                        target = res.target_class(b)
                        if target == name or target not in classes:
                            if other not in members:
                                members.append(other)
            if not members:
                col.diag("WARN", facts.node.file, a.line, f"polymorphic {a.target} has no declaring classes")
                continue
            col.raw.append(
                _Raw(name, (f"{a.target}_type",), Inclusion(tuple(members)), "polymorphic", facts.node.file, a.line)
            )

    # has_one paired with belongs_to
    for name in col.order:
        facts = classes[name]
        for a in facts.associations:
            if a.kind != "has_one" or "as" in a.options or "through" in a.options:
                continue
            target = res.target_class(a)
            other = classes.get(target)
            back = None
            if other is not None:
                for b in other.associations:
                    if b.kind == "belongs_to" and res.target_class(b) == name:
                        back = b
                        break
            if back is None:
                col.diag("WARN", facts.node.file, a.line, f"has_one {a.target} has no matching belongs_to in {target}")
                continue
            fk = a.options.get("foreign_key") or back.options.get("foreign_key") or f"{back.target}_id"
            cond = _scope_condition(a.scope)
            if cond is False:
                col.miss(facts.node.file, a.line, f"has_one {a.target} scope not understood")
                continue
            col.raw.append(
                _Raw(target, (str(scalar(fk)),), Uniqueness(condition=cond), "has-one", facts.node.file, a.line)
            )

    # state machines
    for name, node, values in col.machines:
        file = classes[name].node.file
        plain = [scalar(v) for v in values]
        if not values or not all(isinstance(v, (str, Symbol)) for v in values):
            col.diag("WARN", file, node.line, f"state_machine {node.field}: non-literal state, no constraint")
            continue
        col.raw.append(
            _Raw(name, (node.field,), Inclusion(tuple(dict.fromkeys(plain))), "state-machine", file, node.line)
        )


def _resolve(col: _Collector, res: _Resolver, schema: Schema) -> list[Constraint]:
    out: list[Constraint] = []
    for r in col.raw:
        table = res.table(r.cls)
        if table is None or not schema.has_table(table):
            col.diag("ERROR", r.file, r.line, f"unresolved-table({table or r.cls})")
            continue
        columns = tuple(res.column(r.cls, f) for f in r.fields)
        bad = [c for c in columns if not schema.has_column(table, c)]
        if isinstance(r.kind, Uniqueness) and r.kind.condition is not None:
            if not schema.has_column(table, r.kind.condition.column):
                bad.append(r.kind.condition.column)
        if bad:
            for b in bad:
                col.diag("ERROR", r.file, r.line, f"unresolved-column({table}.{b})")
            continue
        if len(set(columns)) != len(columns):
            col.diag("WARN", r.file, r.line, f"repeated column in {table}{columns}")
            continue
        problem = _check_kind(schema, table, columns[0], r.kind) if len(columns) == 1 else None
        if problem is not None:
            col.miss(r.file, r.line, problem)
            continue
        kind = r.kind
        if isinstance(kind, Inclusion):
            kind = _coerce_inclusion(schema, table, columns[0], kind)
            if kind is None:
                col.miss(r.file, r.line, f"inclusion values do not fit {table}.{columns[0]}")
                continue
        out.append(Constraint(table, columns, kind, r.source, origin=f"{r.file}:{r.line}"))
    return out


def _coerce_inclusion(schema: Schema, table: str, column: str, kind: Inclusion) -> Inclusion | None:
    typ = schema.column(table, column).type
    if typ in ("text", "enum"):
        return Inclusion(tuple(dict.fromkeys(str(v) if not isinstance(v, bool) else str(v).lower() for v in kind.values)))
    if typ in NUMERIC_TYPES:
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in kind.values):
            return kind
        return None
    if typ == "boolean":
        return kind if all(isinstance(v, bool) for v in kind.values) else None
    return kind


def extract(ast: ModelAst, schema: Schema) -> Extraction:
    col = _run_passes(ast)
    res = _Resolver(col, schema)
    _relations(col, res)
    constraints = _resolve(col, res, schema)
    n = ast.node_count
    for i, v in enumerate(col.visits):
        # both passes must stay linear in the size of the AST
        assert v <= n, f"pass {i + 1} visited {v} nodes of {n}"
    return Extraction(ConstraintSet(constraints), col.diagnostics, col.missed, ast.opaque, n, tuple(col.visits))


def extract_all(sources: Iterable[tuple[str, str]] | Iterable[str], schema: Schema) -> Extraction:
    return extract(parse_model_files(list(sources)), schema)


# per-category entry points, mostly for tests


def _only(ast: ModelAst, schema: Schema, sources: tuple[str, ...]) -> list[Constraint]:
    return [c for c in extract(ast, schema).constraints if c.source in sources]


def extract_builtin_validations(ast: ModelAst, schema: Schema) -> list[Constraint]:
    return _only(ast, schema, ("builtin-validation",))


def extract_custom_validations(ast: ModelAst, schema: Schema) -> list[Constraint]:
    return _only(ast, schema, ("custom-validation",))


def extract_inheritance(ast: ModelAst, schema: Schema) -> list[Constraint]:
    return _only(ast, schema, ("inheritance",))


def extract_polymorphic(ast: ModelAst, schema: Schema) -> list[Constraint]:
    return _only(ast, schema, ("polymorphic",))


def extract_has_one(ast: ModelAst, schema: Schema) -> list[Constraint]:
    return _only(ast, schema, ("has-one",))


def extract_state_machine(ast: ModelAst, schema: Schema) -> list[Constraint]:
    return _only(ast, schema, ("state-machine",))
