"""Ruby literal and argument-list parsing."""

from __future__ import annotations

import re
from typing import Any

from .ast import Expr, Ident, Lambda, RangeLit, Regex, Symbol


class LiteralError(ValueError):
    pass


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*[?!]?(?:::[A-Za-z_][A-Za-z0-9_]*)*")
_NUMBER = re.compile(r"-?\d[\d_]*(?:\.\d[\d_]*)?(?:[eE][-+]?\d+)?")
_KEYWORD = re.compile(r"([A-Za-z_][A-Za-z0-9_]*[?]?):(?!:)\s*")
_SYMBOL = re.compile(r":\s?([A-Za-z_][A-Za-z0-9_]*[?!=]?)")
_CLOSERS = {"(": ")", "[": "]", "{": "}", "<": ">"}


def unbalanced(text: str) -> int:
    """Net count of open brackets outside string and regex literals."""
    depth = 0
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "'\"":
            j = _string_end(text, i)
            if j < 0:
                return depth + 1  # an open string continues too
            i = j
            continue
        if ch == "#":
            break
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        i += 1
    return depth


def strip_comment(text: str) -> str:
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "'\"":
            j = _string_end(text, i)
            if j < 0:
                return text
            i = j
            continue
        if ch == "/" and _regex_start(text, i):
            j = _regex_end(text, i)
            if j > 0:
                i = j
                continue
        if ch == "#" and (i == 0 or text[i - 1] != "{"):
            return text[:i].rstrip()
        i += 1
    return text


def _string_end(text: str, i: int) -> int:
    quote = text[i]
    j = i + 1
    while j < len(text):
        if text[j] == "\\":
            j += 2
            continue
        if text[j] == quote:
            return j + 1
        j += 1
    return -1


def _regex_start(text: str, i: int) -> bool:
    before = text[:i].rstrip()
    return not before or before[-1] in "(,=>[{:" or before.endswith("with")


def _regex_end(text: str, i: int) -> int:
    j = i + 1
    in_class = False
    while j < len(text):
        ch = text[j]
        if ch == "\\":
            j += 2
            continue
        if ch == "[":
            in_class = True
        elif ch == "]":
            in_class = False
        elif ch == "/" and not in_class:
            j += 1
            while j < len(text) and text[j] in "imxo":
                j += 1
            return j
        j += 1
    return -1


class ValueParser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    # -- helpers --

    def ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self, s: str) -> bool:
        return self.text.startswith(s, self.pos)

    def at_end(self) -> bool:
        self.ws()
        return self.pos >= len(self.text)

    def expect(self, s: str) -> None:
        self.ws()
        if not self.peek(s):
            raise LiteralError(f"expected {s!r} at column {self.pos + 1}")
        self.pos += len(s)

    def balanced(self, opener: str) -> str:
        """Raw text between ``opener`` at pos and its partner, exclusive."""
        closer = _CLOSERS[opener]
        depth = 0
        start = self.pos
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in "'\"":
                j = _string_end(self.text, self.pos)
                if j < 0:
                    raise LiteralError("unterminated string")
                self.pos = j
                continue
            if ch == opener:
                depth += 1
            elif ch == closer:
                depth -= 1
                if depth == 0:
                    self.pos += 1
                    return self.text[start + 1 : self.pos - 1]
            self.pos += 1
        raise LiteralError(f"unbalanced {opener!r}")

    # -- values --

    def value(self) -> Any:
        self.ws()
        start = self.pos
        v = self._primary()
        self.ws()
        if self.peek("..."):
            self.pos += 3
            return RangeLit(v, self._primary(), exclusive=True)
        if self.peek(".."):
            self.pos += 2
            return RangeLit(v, self._primary())
        # trailing operators or calls make it an expression
        if self.pos < len(self.text) and self.text[self.pos] not in ",)]}" and not self.peek("=>"):
            if not self.peek("do") and not self.peek("if ") and not self.peek("unless "):
                end = self._skip_expression()
                return Expr(self.text[start:end].strip())
        return v

    def _skip_expression(self) -> int:
        depth = 0
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in "'\"":
                j = _string_end(self.text, self.pos)
                self.pos = j if j > 0 else len(self.text)
                continue
            if ch in "([{":
                depth += 1
            elif ch in ")]}":
                if depth == 0:
                    break
                depth -= 1
            elif ch == "," and depth == 0:
                break
            self.pos += 1
        return self.pos

    def _primary(self) -> Any:
        self.ws()
        t = self.text
        if self.pos >= len(t):
            raise LiteralError("missing value")
        ch = t[self.pos]
        if ch in "'\"":
            j = _string_end(t, self.pos)
            if j < 0:
                raise LiteralError("unterminated string")
            raw = t[self.pos + 1 : j - 1]
            self.pos = j
            if ch == '"' and "#{" in raw:
                return Expr(t[self.pos - len(raw) - 2 : self.pos])
            return raw.replace("\\" + ch, ch)
        if ch == "/":
            j = _regex_end(t, self.pos)
            if j < 0:
                raise LiteralError("unterminated regular expression")
            body = t[self.pos + 1 : j]
            cut = body.rfind("/")
            self.pos = j
            return Regex(body[:cut], body[cut + 1 :].replace("o", ""))
        if self.peek("%w") or self.peek("%i"):
            kind = t[self.pos + 1]
            self.pos += 2
            if self.pos >= len(t) or t[self.pos] not in _CLOSERS:
                raise LiteralError("malformed word list")
            words = self.balanced(t[self.pos]).split()
            return [Symbol(w) for w in words] if kind == "i" else words
        if ch == "[":
            return self._array()
        if ch == "{":
            return self._hash()
        if self.peek("->"):
            self.pos += 2
            self.ws()
            if self.peek("("):
                self.balanced("(")
                self.ws()
            if not self.peek("{"):
                raise LiteralError("lambda without body")
            return Lambda(self.balanced("{").strip())
        if self.peek("lambda") and t[self.pos + 6 : self.pos + 7] in (" ", "{"):
            self.pos += 6
            self.ws()
            return Lambda(self.balanced("{").strip())
        if ch == ":":
            if self.pos + 1 < len(t) and t[self.pos + 1] in "'\"":
                self.pos += 1
                return Symbol(self._primary())
            m = _SYMBOL.match(t, self.pos)
            if not m:
                raise LiteralError(f"malformed symbol at column {self.pos + 1}")
            self.pos = m.end()
            return Symbol(m.group(1))
        m = _NUMBER.match(t, self.pos)
        if m and not t[m.end() : m.end() + 1].isalpha():
            self.pos = m.end()
            text = m.group(0).replace("_", "")
            if t.startswith("..", self.pos) and "." in text:
                # 1..5 lexes as 1. then .5; back off
                text = text.split(".")[0]
                self.pos = m.start() + len(text)
            return float(text) if any(c in text for c in ".eE") else int(text)
        m = _IDENT.match(t, self.pos)
        if m:
            self.pos = m.end()
            name = m.group(0)
            if name in ("true", "false"):
                return name == "true"
            if name == "nil":
                return None
            if self.peek("(") or self.peek("."):
                start = m.start()
                self._skip_expression()
                return Expr(t[start : self.pos].strip())
            return Ident(name)
        raise LiteralError(f"unexpected {ch!r} at column {self.pos + 1}")

    def _array(self) -> list:
        self.expect("[")
        items = []
        while True:
            self.ws()
            if self.peek("]"):
                self.pos += 1
                return items
            items.append(self.value())
            self.ws()
            if self.peek(","):
                self.pos += 1
                continue
            self.expect("]")
            return items

    def _hash(self) -> Any:
        start = self.pos
        self.expect("{")
        out: dict = {}
        while True:
            self.ws()
            if self.peek("}"):
                self.pos += 1
                return out
            key = self.key()
            if key is None:
                self.pos = start
                return Expr("{" + self.balanced("{") + "}")
            out[key] = self.value()
            self.ws()
            if self.peek(","):
                self.pos += 1
                continue
            self.expect("}")
            return out

    def key(self) -> str | None:
        """``name:`` or ``:name =>`` or ``"name" =>``; None when no key is present."""
        self.ws()
        m = _KEYWORD.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return m.group(1)
        save = self.pos
        if self.peek(":") or self.peek("'") or self.peek('"'):
            try:
                v = self._primary()
            except LiteralError:
                self.pos = save
                return None
            self.ws()
            if self.peek("=>"):
                self.pos += 2
                return v.name if isinstance(v, Symbol) else str(v)
        self.pos = save
        return None


def parse_args(text: str) -> tuple[list[Any], dict[str, Any]]:
    """Split a call's argument text into positional values and options."""
    text = text.strip()
    if text.startswith("(") :
        p = ValueParser(text)
        inner = p.balanced("(")
        if p.at_end():
            text = inner
    p = ValueParser(text)
    positional: list[Any] = []
    options: dict[str, Any] = {}
    while not p.at_end():
        key = p.key()
        if key is not None:
            options[key] = p.value()
        else:
            positional.append(p.value())
        p.ws()
        if p.peek(","):
            p.pos += 1
            continue
        if not p.at_end():
            raise LiteralError(f"unexpected {p.text[p.pos:]!r}")
    return positional, options
