"""Line-oriented parser for model files.

Blocks open with ``class``, ``module``, ``def``, ``if`` and lines ending in
``do``. They close either with ``end`` or implicitly when a later line is
indented no deeper than the opening line. A stray ``end`` is an error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .ast import (
    Association,
    BuiltinValidation,
    ClassDef,
    CustomValidatorRegistration,
    ErrorAdd,
    Event,
    IfStmt,
    Lambda,
    MethodDef,
    ModelAst,
    Node,
    Opaque,
    Setting,
    StateMachineBlock,
    Transition,
    scalar,
)
from .cond import parse_condition
from .values import LiteralError, ValueParser, parse_args, strip_comment, unbalanced

VALIDATION_APIS = (
    "validates_inclusion_of",
    "validates_presence_of",
    "validates_uniqueness_of",
    "validates_length_of",
    "validates_size_of",
    "validates_format_of",
    "validates_numericality_of",
    "validates",
)
ASSOCIATIONS = ("belongs_to", "has_one", "has_many")
_CONTINUES = (",", "=>", "\\", "&&")
_CLASS = re.compile(r"class\s+([A-Z][\w:]*)\s*(?:<\s*([A-Za-z_][\w:]*))?\s*$")
_MODULE = re.compile(r"module\s+([A-Z][\w:]*)\s*$")
_DEF = re.compile(r"def\s+(?:self\.)?([\w?!]+)(?:\s*\(.*\)|\s+[\w, ]*)?\s*$")
_DO = re.compile(r"\s+do(?:\s*\|[^|]*\|)?\s*$")
_SETTING = re.compile(r"self\.(table_name|inheritance_column|abstract_class)\s*=\s*(.+)$")
_MODIFIER = re.compile(r"^(.*?)\s+(if|unless)\s+(.+)$")
_ERRORS_ADD = re.compile(r"^(?:self\.)?errors(?:\[[^\]]*\])?\.(?:add|<<)\b(.*)$")


class ModelParseError(ValueError):
    def __init__(self, file: str, line: int, message: str) -> None:
        super().__init__(f"{file}:{line}: {message}")
        self.file = file
        self.line = line
        self.message = message


@dataclass
class _Line:
    number: int
    indent: int
    text: str


@dataclass
class _Block:
    kind: str  # class, module, def, if, state_machine, event, opaque
    indent: int
    node: Any
    target: list = field(default_factory=list)


def _logical_lines(source: str, file: str) -> list[_Line]:
    out: list[_Line] = []
    pending: _Line | None = None
    for number, raw in enumerate(source.splitlines(), start=1):
        text = strip_comment(raw.rstrip())
        stripped = text.strip()
        if pending is not None:
            pending.text += " " + stripped
            if not _continues(pending.text):
                out.append(pending)
                pending = None
            continue
        if not stripped:
            continue
        line = _Line(number, len(text) - len(text.lstrip()), stripped)
        if _continues(stripped):
            pending = line
        else:
            out.append(line)
    if pending is not None:
        raise ModelParseError(file, pending.number, "statement continues past end of file")
    # split ';'-separated statements
    result: list[_Line] = []
    for ln in out:
        for part in _split_semicolons(ln.text):
            if part:
                result.append(_Line(ln.number, ln.indent, part))
    return result


def _continues(text: str) -> bool:
    if unbalanced(text) > 0:
        return True
    if text.endswith("||"):
        return not _DO.search(text)
    return text.endswith(_CONTINUES)


def _split_semicolons(text: str) -> list[str]:
    parts, buf, depth = [], [], 0
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "'\"":
            j = text.find(ch, i + 1)
            while j > 0 and text[j - 1] == "\\":
                j = text.find(ch, j + 1)
            j = len(text) if j < 0 else j + 1
            buf.append(text[i:j])
            i = j
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == ";" and depth == 0:
            parts.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        i += 1
    parts.append("".join(buf).strip())
    return parts


class _FileParser:
    def __init__(self, source: str, file: str) -> None:
        self.file = file
        self.lines = _logical_lines(source, file)
        self.ast = ModelAst()
        self.stack: list[_Block] = []
        self.prefix: list[str] = []

    def error(self, line: int, message: str) -> ModelParseError:
        return ModelParseError(self.file, line, message)

    def parse(self) -> ModelAst:
        for ln in self.lines:
            self.line(ln)
        while self.stack:
            self.pop()
        return self.ast

    # -- block handling --

    def pop(self) -> None:
        b = self.stack.pop()
        if b.kind == "module":
            self.prefix.pop()

    def context(self) -> str:
        return self.stack[-1].kind if self.stack else "top"

    def add(self, node: Node) -> None:
        if isinstance(node, Opaque):
            self.ast.opaque += 1
        if isinstance(node, ClassDef):
            self.ast.classes.append(node)
            return
        if self.stack:
            self.stack[-1].target.append(node)

    def push(self, kind: str, ln: _Line, node: Any, target: list | None = None) -> None:
        self.stack.append(_Block(kind, ln.indent, node, target if target is not None else []))

    def line(self, ln: _Line) -> None:
        text = ln.text
        word = text.split(None, 1)[0] if text else ""
        if word == "end" or text.startswith("end.") or text == "end)":
            while self.stack and self.stack[-1].indent > ln.indent:
                self.pop()
            if not self.stack:
                raise self.error(ln.number, "unbalanced 'end'")
            self.pop()
            return
        if word in ("else", "elsif"):
            while self.stack and self.stack[-1].indent > ln.indent:
                self.pop()
            if not self.stack or self.stack[-1].kind not in ("if", "opaque"):
                raise self.error(ln.number, f"'{word}' outside of an if block")
            b = self.stack[-1]
            if b.kind == "if":
                # conditions of elsif/else branches depend on earlier branches; keep them opaque
                b.target = b.node.orelse
            return
        while self.stack and self.stack[-1].indent >= ln.indent:
            self.pop()
        try:
            self.statement(ln)
        except LiteralError as exc:
            raise self.error(ln.number, str(exc)) from None

    # -- statements --

    def statement(self, ln: _Line) -> None:
        text, ctx = ln.text, self.context()
        m = _CLASS.match(text)
        if m:
            name = "::".join(self.prefix + [m.group(1)])
            node = ClassDef(ln.number, name, m.group(2), self.file)
            self.add(node)
            self.push("class", ln, node, node.statements)
            return
        m = _MODULE.match(text)
        if m and ctx in ("top", "module"):
            self.prefix.append(m.group(1))
            self.push("module", ln, None)
            return
        if ctx == "class":
            self.class_statement(ln)
        elif ctx in ("def", "if"):
            self.method_statement(ln)
        elif ctx == "state_machine":
            self.state_machine_statement(ln)
        elif ctx == "event":
            self.event_statement(ln)
        else:
            self.opaque(ln)

    def opaque(self, ln: _Line) -> None:
        node = Opaque(ln.number, ln.text)
        self.add(node)
        if _opens_block(ln.text):
            self.push("opaque", ln, node, node.body)

    def class_statement(self, ln: _Line) -> None:
        text = ln.text
        head, _, rest = text.partition(" ")
        head, paren_rest = _split_call(head)
        rest = (paren_rest + " " + rest).strip()
        m = _SETTING.match(text)
        if m:
            value = ValueParser(m.group(2)).value()
            self.add(Setting(ln.number, m.group(1), scalar(value)))
            return
        m = _DEF.match(text)
        if m:
            node = MethodDef(ln.number, m.group(1))
            self.add(node)
            self.push("def", ln, node, node.body)
            return
        if head in VALIDATION_APIS:
            args, opts = parse_args(rest)
            fields = [str(scalar(a)) for a in args]
            self.add(BuiltinValidation(ln.number, head, fields, opts))
            return
        if head == "validate":
            args, _ = parse_args(rest)
            if not args:
                self.opaque(ln)
                return
            for a in args:
                self.add(CustomValidatorRegistration(ln.number, str(scalar(a))))
            return
        if head in ASSOCIATIONS:
            args, opts = parse_args(rest)
            scope = next((a for a in args if isinstance(a, Lambda)), None)
            targets = [str(scalar(a)) for a in args if not isinstance(a, Lambda)]
            for t in targets:
                self.add(Association(ln.number, head, t, opts, scope))
            return
        if head == "state_machine":
            args_text = _DO.sub("", text[len("state_machine") :])
            args, opts = parse_args(args_text)
            fld = str(scalar(args[0])) if args else "state"
            node = StateMachineBlock(ln.number, fld, opts.get("initial"))
            self.add(node)
            if _DO.search(text):
                self.push("state_machine", ln, node, node.events)
            return
        self.opaque(ln)

    def method_statement(self, ln: _Line) -> None:
        text = ln.text
        word = text.split(None, 1)[0]
        if word == "if":
            cond_text = text[2:].strip()
            if cond_text.endswith(" then"):
                cond_text = cond_text[:-5]
            node = IfStmt(ln.number, parse_condition(cond_text), cond_text)
            self.add(node)
            self.push("if", ln, node, node.body)
            return
        m = _ERRORS_ADD.match(text)
        if m:
            self.add(ErrorAdd(ln.number, m.group(1).strip() or None))
            return
        m = _MODIFIER.match(text)
        if m and _ERRORS_ADD.match(m.group(1)):
            cond_text = m.group(3)
            cond = parse_condition(cond_text) if m.group(2) == "if" else None
            node = IfStmt(ln.number, cond, cond_text, [ErrorAdd(ln.number)])
            self.add(node)
            return
        self.opaque(ln)

    def state_machine_statement(self, ln: _Line) -> None:
        text = ln.text
        if text.startswith("event") and _DO.search(text):
            args, _ = parse_args(_DO.sub("", text[len("event") :]))
            node = Event(ln.number, str(scalar(args[0])) if args else "")
            self.add(node)
            self.push("event", ln, node, node.transitions)
            return
        self.opaque(ln)

    def event_statement(self, ln: _Line) -> None:
        text = ln.text
        if text.startswith("transition"):
            raw = text[len("transition") :]
            m = _MODIFIER.match(raw)
            if m:
                raw = m.group(1)
            args, opts = parse_args(raw)
            if "from" in opts or "to" in opts:
                src = opts.get("from", [])
                self.add(Transition(ln.number, src if isinstance(src, list) else [src], opts.get("to")))
                return
            # transition :a => :b  and  transition [:a, :b] => :c
            for key, value in opts.items():
                self.add(Transition(ln.number, [key], value))
            return
        self.opaque(ln)


def _split_call(head: str) -> tuple[str, str]:
    i = head.find("(")
    if i > 0:
        return head[:i], head[i:]
    return head, ""


def _opens_block(text: str) -> bool:
    word = text.split(None, 1)[0]
    if word in ("if", "unless", "while", "until", "case", "begin", "def", "module", "class"):
        return True
    return bool(_DO.search(text))


def parse_model_file(source: str, file: str = "<model>") -> ModelAst:
    return _FileParser(source, file).parse()


def parse_model_files(sources: list[tuple[str, str]] | list[str]) -> ModelAst:
    """Parse ``(file, text)`` pairs (or bare texts) into one AST."""
    ast = ModelAst()
    for i, item in enumerate(sources):
        file, text = item if isinstance(item, tuple) else (f"<model{i}>", item)
        part = parse_model_file(text, file)
        ast.classes.extend(part.classes)
        ast.opaque += part.opaque
    return ast
