"""Ruby-style regular expressions: translation to Python ``re`` and to
PostgreSQL ARE syntax, plus a bounded sampler for generating matching strings.

Format constraints store the pattern exactly as written in the model file
(without the slashes) together with its flag letters.
"""

from __future__ import annotations

import functools
import random
import re
import string

try:  # Python >= 3.11
    import re._parser as _sre_parse  # type: ignore[import-not-found]
    from re import _constants as _sre_c  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - exercised on 3.10
    import sre_constants as _sre_c
    import sre_parse as _sre_parse


class Uncheckable(ValueError):
    """Pattern uses a construct with no PostgreSQL equivalent."""


def split_ruby_literal(text: str) -> tuple[str, str]:
    """``/abc/i`` -> ``("abc", "i")``; bare text is returned with no flags."""
    text = text.strip()
    if len(text) >= 2 and text[0] == "/":
        end = text.rfind("/")
        if end > 0:
            flags = text[end + 1 :]
            if all(f in "imxo" for f in flags):
                return text[1:end], flags.replace("o", "")
    return text, ""


def _tokens(pattern: str):
    """Yield (token, in_class) pairs; escapes are kept as two-char tokens."""
    i = 0
    depth = 0
    n = len(pattern)
    while i < n:
        ch = pattern[i]
        if ch == "\\" and i + 1 < n:
            if pattern[i + 1] == "p" and i + 2 < n and pattern[i + 2] == "{":
                close = pattern.find("}", i)
                tok = pattern[i : close + 1] if close > 0 else pattern[i:]
                yield tok, depth > 0
                i += len(tok)
                continue
            yield pattern[i : i + 2], depth > 0
            i += 2
            continue
        if ch == "[":
            if depth > 0 and pattern.startswith("[:", i):
                close = pattern.find(":]", i)
                if close > 0:
                    yield pattern[i : close + 2], True
                    i = close + 2
                    continue
            depth += 1
            yield ch, depth > 1
            # a leading ']' or '^]' is literal
            j = i + 1
            if j < n and pattern[j] == "^":
                yield "^", True
                j += 1
            if j < n and pattern[j] == "]":
                yield "\\]", True
                j += 1
            i = j
            continue
        if ch == "]" and depth > 0:
            depth -= 1
            yield ch, depth > 0
            i += 1
            continue
        yield ch, depth > 0
        i += 1


# property classes with a Python spelling; the second form is for use inside [...]
_PROPERTIES = {
    "L": ("[^\\W\\d_]", None),
    "Alpha": ("[^\\W\\d_]", None),
    "Alnum": ("[^\\W_]", None),
    "N": ("\\d", "\\d"),
    "Digit": ("\\d", "\\d"),
    "Space": ("\\s", "\\s"),
    "Word": ("\\w", "\\w"),
}


def _property_class(tok: str, in_class: bool) -> str:
    name = tok[3:-1]
    spelled = _PROPERTIES.get(name)
    form = spelled and spelled[1 if in_class else 0]
    if not form:
        raise Uncheckable(f"unsupported property class {tok}")
    return form


def ruby_to_python(pattern: str, flags: str = "") -> re.Pattern[str]:
    """Compile a Ruby regexp for Python; raises Uncheckable if it has no translation."""
    return _ruby_to_python(pattern, flags)


@functools.lru_cache(maxsize=512)
def _ruby_to_python(pattern: str, flags: str) -> re.Pattern[str]:
    out = []
    prev = ""
    for tok, in_class in _tokens(pattern):
        if tok == "\\z":
            out.append("\\Z")
        elif tok == "\\Z":
            out.append("(?=\\n?\\Z)")
        elif tok == "\\h":
            out.append("0-9a-fA-F" if in_class else "[0-9a-fA-F]")
        elif tok == "\\H" and not in_class:
            out.append("[^0-9a-fA-F]")
        elif tok == "<" and prev == "(?" and not in_class:
            out.append("P<")
        elif tok.startswith("\\p{"):
            out.append(_property_class(tok, in_class))
        else:
            out.append(tok)
        prev = (prev + tok)[-2:]
    text = "".join(out)
    # (?P<= and (?P<! came from lookbehinds; undo
    text = text.replace("(?P<=", "(?<=").replace("(?P<!", "(?<!")
    reflags = re.MULTILINE
    if "i" in flags:
        reflags |= re.IGNORECASE
    if "m" in flags:
        reflags |= re.DOTALL
    if "x" in flags:
        reflags |= re.VERBOSE
    return re.compile(text, reflags)


_PG_CLASS_ESCAPES_FORBIDDEN = ("\\D", "\\S", "\\W")
_NAMED_GROUP = re.compile(r"(?<!\\)\(\?<([A-Za-z_]\w*)>")


def ruby_to_postgres(pattern: str, flags: str = "") -> tuple[str, bool]:
    """Return ``(are_pattern, case_insensitive)``; raises Uncheckable."""
    if re.search(r"\(\?[>imx-]", pattern):
        raise Uncheckable("atomic group or inline options")
    pattern = _NAMED_GROUP.sub("(", pattern)
    out = []
    prev = ""
    dotall = "m" in flags
    for tok, in_class in _tokens(pattern):
        if tok.startswith("\\p{") or tok in ("\\G", "\\K", "\\R", "\\X"):
            raise Uncheckable(tok)
        if in_class:
            if tok in _PG_CLASS_ESCAPES_FORBIDDEN:
                raise Uncheckable(f"{tok} inside bracket expression")
            out.append("[:xdigit:]" if tok == "\\h" else tok)
        elif tok == "+" and prev in ("*", "+", "?", "}"):
            raise Uncheckable("possessive quantifier")
        elif tok == "\\z":
            out.append("\\Z")
        elif tok == "\\Z":
            out.append("(?:\\n)?\\Z")
        elif tok == "^":
            out.append("(?:^|(?<=\\n))")
        elif tok == "$":
            out.append("(?=\\n|$)")
        elif tok == "." and not dotall:
            out.append("[^\\n]")
        elif tok == "\\h":
            out.append("[[:xdigit:]]")
        elif tok == "\\H":
            out.append("[^[:xdigit:]]")
        else:
            out.append(tok)
        prev = "" if in_class else tok
    text = "".join(out)
    if "x" in flags:
        text = "(?x)" + text
    return text, "i" in flags


def postgres_to_python(pattern: str, case_insensitive: bool = False) -> re.Pattern[str]:
    return _postgres_to_python(pattern, case_insensitive)


@functools.lru_cache(maxsize=512)
def _postgres_to_python(pattern: str, case_insensitive: bool) -> re.Pattern[str]:
    reflags = re.DOTALL
    if pattern.startswith("(?x)"):
        pattern = pattern[4:]
        reflags |= re.VERBOSE
    if case_insensitive:
        reflags |= re.IGNORECASE
    out = []
    for tok, in_class in _tokens(pattern):
        if tok == "[:xdigit:]":
            out.append("0-9A-Fa-f")
        elif tok == "$" and not in_class:
            out.append("\\Z")
        else:
            out.append(tok)
    text = "".join(out).replace("[[0-9A-Fa-f]]", "[0-9A-Fa-f]")
    return re.compile(text, reflags)


# -- sampling ---------------------------------------------------------------

_SAFE_CHARS = string.ascii_letters + string.digits + "_-.+"
_CATEGORY_CHARS = {
    _sre_c.CATEGORY_DIGIT: string.digits,
    _sre_c.CATEGORY_NOT_DIGIT: string.ascii_letters + "_-.",
    _sre_c.CATEGORY_WORD: string.ascii_letters + string.digits + "_",
    _sre_c.CATEGORY_NOT_WORD: "-.+@ ",
    _sre_c.CATEGORY_SPACE: " ",
    _sre_c.CATEGORY_NOT_SPACE: _SAFE_CHARS,
}


class _Sampler:
    def __init__(self, rng: random.Random, max_repeat: int) -> None:
        self.rng = rng
        self.max_repeat = max_repeat
        self.groups: dict[int, str] = {}

    def run(self, parsed) -> str:
        return "".join(self.node(op, av) for op, av in parsed)

    def charset(self, items) -> str:
        negate = False
        chars: list[str] = []
        for op, av in items:
            if op is _sre_c.NEGATE:
                negate = True
            elif op is _sre_c.LITERAL:
                chars.append(chr(av))
            elif op is _sre_c.RANGE:
                lo, hi = av
                chars.extend(chr(c) for c in range(lo, min(hi, lo + 200) + 1))
            elif op is _sre_c.CATEGORY:
                chars.extend(_CATEGORY_CHARS.get(av, _SAFE_CHARS))
        if negate:
            banned = set(chars)
            pool = [c for c in _SAFE_CHARS if c not in banned]
            return self.rng.choice(pool) if pool else "~"
        return self.rng.choice(chars) if chars else ""

    def node(self, op, av) -> str:
        rng = self.rng
        if op is _sre_c.LITERAL:
            return chr(av)
        if op is _sre_c.NOT_LITERAL:
            pool = [c for c in _SAFE_CHARS if ord(c) != av]
            return rng.choice(pool)
        if op is _sre_c.ANY:
            return rng.choice(_SAFE_CHARS)
        if op is _sre_c.IN:
            return self.charset(av)
        if op is _sre_c.CATEGORY:
            return rng.choice(_CATEGORY_CHARS.get(av, _SAFE_CHARS))
        if op is _sre_c.BRANCH:
            return self.run(rng.choice(av[1]))
        if op is _sre_c.SUBPATTERN:
            group = av[0]
            text = self.run(av[-1])
            if group is not None:
                self.groups[group] = text
            return text
        if op in (_sre_c.MAX_REPEAT, _sre_c.MIN_REPEAT, getattr(_sre_c, "POSSESSIVE_REPEAT", None)):
            lo, hi, sub = av
            if hi is _sre_c.MAXREPEAT or hi > lo + self.max_repeat:
                hi = lo + self.max_repeat
            return "".join(self.run(sub) for _ in range(rng.randint(lo, hi)))
        if op is _sre_c.GROUPREF:
            return self.groups.get(av, "")
        if op is getattr(_sre_c, "ATOMIC_GROUP", None):
            return self.run(av)
        # anchors and lookarounds contribute no characters
        return ""


def sample_matching(
    patterns: list[tuple[str, str]],
    rng: random.Random,
    accept=None,
    attempts: int = 200,
    max_repeat: int = 6,
) -> str | None:
    """Draw a string matching every Ruby pattern in ``patterns``.

    ``accept`` is an optional extra predicate (e.g. a length range). Returns
    None when no sample is found within ``attempts`` draws.
    """
    if not patterns:
        return None
    compiled = [ruby_to_python(p, f) for p, f in patterns]
    first = compiled[0]
    parsed = _sre_parse.parse(first.pattern, first.flags & ~re.VERBOSE)
    for attempt in range(attempts):
        sampler = _Sampler(rng, max_repeat if attempt < attempts // 2 else 2)
        text = sampler.run(parsed)
        if all(c.search(text) for c in compiled) and (accept is None or accept(text)):
            return text
    return None
