"""Pronunciation lexicon, rule-based fallback G2P and phoneme distances.

Lexicon files are CMU-dictionary style: ``WORD  PH PH PH`` (two spaces
between word and phonemes), ``;;;`` comment lines.  A word may appear on
several lines; the first is its primary pronunciation.
"""
import functools
import os
from dataclasses import dataclass

import numpy as np

from . import kernels

PHONES = (
    "AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW "
    "B D G K P T "
    "CH DH F HH JH S SH TH V Z ZH "
    "M N NG "
    "L R W Y"
).split()

PHONE_CLASS = {}
for _p in "AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW".split():
    PHONE_CLASS[_p] = "vowel"
for _p in "B D G K P T".split():
    PHONE_CLASS[_p] = "stop"
for _p in "CH DH F HH JH S SH TH V Z ZH".split():
    PHONE_CLASS[_p] = "fricative"
for _p in "M N NG".split():
    PHONE_CLASS[_p] = "nasal"
for _p in "L R W Y".split():
    PHONE_CLASS[_p] = "liquid"

WORD_SEP = "|"
PHONE_SPECIALS = ["<pad>", "<s>", "</s>", "<unk>"]
PHONE_VOCAB = PHONE_SPECIALS + [WORD_SEP] + PHONES
PHONE_ID = {p: i for i, p in enumerate(PHONE_VOCAB)}
SEP_ID = PHONE_ID[WORD_SEP]

_CLASS_NAMES = sorted(set(PHONE_CLASS.values()))
CLASS_IDS = np.array(
    [_CLASS_NAMES.index(PHONE_CLASS[p]) if p in PHONE_CLASS else -1 for p in PHONE_VOCAB],
    dtype=np.int32,
)

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
DEFAULT_LEXICON = os.path.join(DATA_DIR, "lexicon.dict")

# Longest match first; deliberately crude, only covers words the
# dictionary lacks.
LETTER_RULES = [
    ("tch", ["CH"]), ("sch", ["S", "K"]),
    ("ch", ["CH"]), ("sh", ["SH"]), ("th", ["TH"]), ("ph", ["F"]), ("ng", ["NG"]),
    ("ck", ["K"]), ("qu", ["K", "W"]), ("wh", ["W"]), ("gh", ["G"]),
    ("ee", ["IY"]), ("ea", ["IY"]), ("oo", ["UW"]), ("ai", ["EY"]), ("ay", ["EY"]),
    ("oa", ["OW"]), ("ou", ["AW"]), ("ow", ["OW"]), ("oi", ["OY"]), ("oy", ["OY"]),
    ("au", ["AO"]), ("aw", ["AO"]), ("ie", ["IY"]), ("ey", ["IY"]),
    ("a", ["AE"]), ("b", ["B"]), ("c", ["K"]), ("d", ["D"]), ("e", ["EH"]),
    ("f", ["F"]), ("g", ["G"]), ("h", ["HH"]), ("i", ["IH"]), ("j", ["JH"]),
    ("k", ["K"]), ("l", ["L"]), ("m", ["M"]), ("n", ["N"]), ("o", ["AA"]),
    ("p", ["P"]), ("q", ["K"]), ("r", ["R"]), ("s", ["S"]), ("t", ["T"]),
    ("u", ["AH"]), ("v", ["V"]), ("w", ["W"]), ("x", ["K", "S"]), ("y", ["Y"]),
    ("z", ["Z"]),
]


class LexiconError(ValueError):
    pass


def letter_to_phones(word):
    word = word.lower()
    out = []
    i = 0
    while i < len(word):
        for graph, phones in LETTER_RULES:
            if word.startswith(graph, i):
                out.extend(phones)
                i += len(graph)
                break
        else:
            i += 1  # apostrophes, digits, foreign glyphs
    return out


@dataclass
class PhonemeSequence:
    ids: list

    @property
    def symbols(self):
        return [PHONE_VOCAB[i] for i in self.ids]

    def words(self):
        """Split into per-word phoneme symbol lists."""
        chunks = [[]]
        for s in self.symbols:
            if s == WORD_SEP:
                chunks.append([])
            else:
                chunks[-1].append(s)
        return chunks if self.ids else []


class Lexicon:
    def __init__(self, entries=()):
        self.prons = {}
        for word, phones in entries:
            self.add(word, phones)
        self._index = None

    def add(self, word, phones):
        for p in phones:
            if p not in PHONE_ID or p == WORD_SEP:
                raise LexiconError(f"unknown phoneme {p!r} in entry for {word!r}")
        self.prons.setdefault(word.lower(), []).append(tuple(phones))
        self._index = None

    def __len__(self):
        return len(self.prons)

    def __contains__(self, word):
        return word.lower() in self.prons

    def lookup(self, word):
        """Primary pronunciation, or None."""
        v = self.prons.get(word.lower())
        return list(v[0]) if v else None

    def variants(self, word):
        return [list(p) for p in self.prons.get(word.lower(), [])]

    @property
    def words(self):
        return sorted(self.prons)

    def _search_index(self):
        # Pronunciations in alphabetical word order, so the first minimum the
        # kernel finds belongs to the alphabetically first word.
        if self._index is None:
            owners, flat, offsets = [], [], [0]
            for w in sorted(self.prons):
                for pron in self.prons[w]:
                    owners.append(w)
                    flat.extend(PHONE_ID[p] for p in pron)
                    offsets.append(len(flat))
            self._index = (owners, np.array(flat, np.int32), np.array(offsets, np.int64))
        return self._index


def load_lexicon(path=DEFAULT_LEXICON):
    lex = Lexicon()
    with open(path, encoding="utf-8") as f:
        for n, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith(";;;"):
                continue
            if "  " not in line:
                raise LexiconError(f"{path}:{n}: expected 'WORD  PHONES'")
            word, phones = line.split("  ", 1)
            phones = phones.split()
            if not word.strip() or not phones:
                raise LexiconError(f"{path}:{n}: empty word or pronunciation")
            try:
                lex.add(word.strip(), phones)
            except LexiconError as e:
                raise LexiconError(f"{path}:{n}: {e}") from None
    return lex


@functools.lru_cache(maxsize=None)
def default_lexicon():
    return load_lexicon(DEFAULT_LEXICON)


def word_phones(word, lexicon):
    pron = lexicon.lookup(word)
    return pron if pron is not None else letter_to_phones(word)


def phonemize(words, lexicon):
    """Primary pronunciations joined by the word-boundary symbol."""
    if isinstance(words, str):
        words = words.split()
    ids = []
    for w in words:
        phones = word_phones(w, lexicon)
        if not phones:
            continue
        if ids:
            ids.append(SEP_ID)
        ids.extend(PHONE_ID[p] for p in phones)
    return PhonemeSequence(ids)


def _ids(seq):
    return [PHONE_ID[p] if isinstance(p, str) else int(p) for p in seq]


def phoneme_edit_distance(a, b):
    """Levenshtein distance; substitutions within a phoneme class cost 0.5."""
    return float(kernels.weighted_edit_distance(_ids(a), _ids(b), CLASS_IDS))


def nearest_word(phonemes, lexicon, band=3):
    """Word whose pronunciation (any variant) is closest; ties go to the
    alphabetically first word.  ``band`` bounds the length gap scanned on the
    first pass; the result is still exact."""
    if len(lexicon) == 0:
        raise LexiconError("nearest_word on an empty lexicon")
    owners, flat, offsets = lexicon._search_index()
    i, _ = kernels.nearest_pron(_ids(phonemes), flat, offsets, CLASS_IDS, band)
    return owners[i]
