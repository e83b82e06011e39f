import random
import re

import pytest

from semopt.regex import (
    Uncheckable,
    postgres_to_python,
    ruby_to_postgres,
    ruby_to_python,
    sample_matching,
    split_ruby_literal,
)

EMAIL = r"\A([^@\s]+)@((?:[-a-z0-9]+\.)+[a-z]{2,})\Z"


def test_split_literal():
    assert split_ruby_literal("/abc/i") == ("abc", "i")
    assert split_ruby_literal("abc") == ("abc", "")


@pytest.mark.parametrize(
    "pattern,flags,yes,no",
    [
        (r"\A[a-zA-Z0-9_]+\z", "", ["ben", "a_1"], ["ab#c", "ben\n", ""]),
        (EMAIL, "i", ["A@EXAMPLE.com", "x@y.io\n"], ["no-at", "a@b"]),
        (r"^\d+$", "", ["12", "x\n12"], ["ab"]),
        (r"\h+", "", ["beef"], ["zz"]),
    ],
)
def test_ruby_semantics(pattern, flags, yes, no):
    rx = ruby_to_python(pattern, flags)
    assert all(rx.search(s) for s in yes)
    assert not any(rx.search(s) for s in no)


@pytest.mark.parametrize("pattern", [r"\A[a-zA-Z0-9_]+\z", EMAIL, r"\A\d{3}-\d{4}\z", r"\A[a-z]+\.(png|jpg)\z"])
def test_postgres_translation_agrees(pattern):
    ruby = ruby_to_python(pattern, "i")
    pg, ci = ruby_to_postgres(pattern, "i")
    back = postgres_to_python(pg, ci)
    rng = random.Random(1)
    for _ in range(50):
        s = sample_matching([(pattern, "i")], rng) or ""
        assert bool(ruby.search(s)) == bool(back.search(s))
    for s in ("", "x", "a@b", "123-4567", "a.png\n", "ben"):
        assert bool(ruby.search(s)) == bool(back.search(s)), s


@pytest.mark.parametrize("pattern", [r"\A\p{L}+\z", r"\A(?>a+)\z", r"\Aa++\z", r"[\W]"])
def test_uncheckable(pattern):
    with pytest.raises(Uncheckable):
        ruby_to_postgres(pattern)


def test_property_classes():
    rx = ruby_to_python(r"\A\p{L}+\z")
    assert rx.search("Zoë") and not rx.search("a1") and not rx.search("a_b")
    assert ruby_to_python(r"\A[\p{Digit}x]+\z").search("x12")
    with pytest.raises(Uncheckable):
        ruby_to_python(r"\p{Greek}")
    with pytest.raises(Uncheckable):
        ruby_to_python(r"[\p{L}]")


def test_sampler_matches_all_patterns():
    rng = random.Random(3)
    pats = [(r"\A[a-z0-9_]+\z", ""), (r"\d", "")]
    for _ in range(20):
        s = sample_matching(pats, rng, accept=lambda t: 2 <= len(t) <= 8)
        assert s is not None
        assert re.fullmatch(r"[a-z0-9_]+", s) and re.search(r"\d", s) and 2 <= len(s) <= 8


def test_sampler_gives_up():
    assert sample_matching([(r"\A\d+\z", ""), (r"\A[a-z]+\z", "")], random.Random(0), attempts=20) is None
    assert sample_matching([], random.Random(0)) is None
