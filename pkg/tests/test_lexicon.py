import json
import os

import pytest
from hypothesis import given, settings, strategies as st

from kpat import lexicon as lx

import oracles

EXPECTED = json.load(open(os.path.join(os.path.dirname(__file__), "fixtures", "expected.json")))


@pytest.fixture(scope="module")
def lex():
    return lx.default_lexicon()


def write(tmp_path, text):
    p = tmp_path / "lex.dict"
    p.write_text(text)
    return str(p)


def test_load_single_entry(tmp_path):
    lex = lx.load_lexicon(write(tmp_path, ";;; comment\nBEDFORD  B EH D F ER D\n"))
    assert lex.lookup("bedford") == ["B", "EH", "D", "F", "ER", "D"]
    assert lex.lookup("BedFord") == lex.lookup("bedford")


def test_empty_file(tmp_path):
    lex = lx.load_lexicon(write(tmp_path, ""))
    assert len(lex) == 0 and lex.lookup("bedford") is None


def test_duplicate_lines_keep_variants(tmp_path):
    lex = lx.load_lexicon(write(tmp_path, "READ  R IY D\nREAD  R EH D\n"))
    assert lex.variants("read") == [["R", "IY", "D"], ["R", "EH", "D"]]
    assert lex.lookup("read") == ["R", "IY", "D"]


@pytest.mark.parametrize("line", ["BEDFORD B EH D", "BEDFORD  B EH QQ", "  B EH"])
def test_malformed_line_reports_line_number(tmp_path, line):
    with pytest.raises(lx.LexiconError, match=":2:"):
        lx.load_lexicon(write(tmp_path, "A  AH\n" + line + "\n"))


def test_bundled_lexicon_entry(lex):
    assert lex.lookup("bedford") == ["B", "EH", "D", "F", "ER", "D"]
    assert len(lex) > 4000


def test_phonemize_in_lexicon_sentence(lex):
    seq = lx.phonemize("i stay in bedford", lex)
    assert seq.symbols == ["AY", "|", "S", "T", "EY", "|", "IH", "N", "|", "B", "EH", "D", "F", "ER", "D"]
    assert seq.words() == [lex.lookup(w) for w in "i stay in bedford".split()]


def test_phonemize_fallback_rules():
    assert lx.phonemize(["zz"], lx.Lexicon()).symbols == ["Z", "Z"]
    assert lx.letter_to_phones("beet") == ["B", "IY", "T"]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.text(alphabet="abcdefghijklmnopqrstuvwxyz'", min_size=1, max_size=7), max_size=6))
def test_phonemize_total_and_boundaries_well_formed(words):
    lex = lx.default_lexicon()
    seq = lx.phonemize(words, lex)
    assert seq == lx.phonemize(words, lex)
    s = seq.symbols
    if s:
        assert s[0] != "|" and s[-1] != "|"
        assert all(not (a == b == "|") for a, b in zip(s, s[1:]))


def test_edit_distance_examples():
    assert lx.phoneme_edit_distance(["B", "EH", "D"], ["B", "EH", "D"]) == 0
    assert lx.phoneme_edit_distance(["B", "EH", "D"], ["B", "IH", "D"]) == 0.5
    assert lx.phoneme_edit_distance(["B", "EH", "D"], ["B", "S", "D"]) == 1.0
    assert lx.phoneme_edit_distance([], ["B", "EH"]) == 2.0


PH = st.lists(st.sampled_from(lx.PHONES), max_size=8)


@settings(max_examples=100, deadline=None)
@given(PH, PH)
def test_edit_distance_matches_oracle_and_is_symmetric(a, b):
    d = lx.phoneme_edit_distance(a, b)
    assert d == oracles.weighted_levenshtein(a, b, lx.PHONE_CLASS)
    assert d == lx.phoneme_edit_distance(b, a)
    assert (d == 0) == (a == b)


@settings(max_examples=100, deadline=None)
@given(PH, PH, PH)
def test_edit_distance_triangle(a, b, c):
    d = lx.phoneme_edit_distance
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


def test_nearest_word_exact(lex):
    assert lx.nearest_word(lex.lookup("bedford"), lex) == "bedford"


def test_nearest_word_tie_is_alphabetical():
    lex = lx.Lexicon([("bob", ["B", "AA", "B"]), ("bab", ["B", "AE", "B"])])
    # IH is one in-class substitution away from both vowels
    assert lx.nearest_word(["B", "IH", "B"], lex) == "bab"


def test_nearest_word_searches_all_variants():
    lex = lx.Lexicon([("read", ["R", "IY", "D"]), ("read", ["R", "EH", "D"]), ("red", ["R", "EH", "T"])])
    assert lx.nearest_word(["R", "EH", "D"], lex) == "read"


def test_nearest_word_empty_lexicon():
    with pytest.raises(lx.LexiconError):
        lx.nearest_word(["B"], lx.Lexicon())


@pytest.mark.parametrize("case", EXPECTED["nearest_word"], ids=lambda c: " ".join(c["phones"]))
def test_nearest_word_matches_brute_force(lex, case):
    w = lx.nearest_word(case["phones"], lex)
    assert w == case["word"]
    best = min(lx.phoneme_edit_distance(case["phones"], p) for p in lex.variants(w))
    assert best == case["distance"]


def test_nearest_word_round_trip_unique_pronunciations(lex):
    owners = {}
    for w in lex.words:
        for p in lex.variants(w):
            owners.setdefault(tuple(p), set()).add(w)
    checked = 0
    for w in lex.words[::25]:
        if len(owners[tuple(lex.lookup(w))]) == 1:
            assert lx.nearest_word(lex.lookup(w), lex) == w
            checked += 1
    assert checked > 100


def test_every_pronunciation_uses_inventory(lex):
    inv = set(lx.PHONES)
    assert all(set(p) <= inv for w in lex.words for p in lex.variants(w))
