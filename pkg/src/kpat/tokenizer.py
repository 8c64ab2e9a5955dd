"""Byte-pair-encoding sub-word tokenizer.

Text is lowercased and whitespace-normalised; each word is prefixed with the
boundary symbol ``▁`` before splitting into characters, so merges can learn
word-initial pieces.  Ids 0-3 are reserved for PAD, BOS, EOS and UNK.
"""
import json
import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ["<pad>", "<s>", "</s>", "<unk>"]
BOUNDARY = "▁"
UNK_TEXT = "<unk>"


def normalize(text):
    return " ".join(text.lower().split())


@dataclass
class TokenSequence:
    ids: list
    text: str = None

    def __len__(self):
        return len(self.ids)


@dataclass
class Vocabulary:
    tokens: list
    merges: list = field(default_factory=list)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.ranks = {tuple(m): r for r, m in enumerate(self.merges)}
        self._cache = {}

    def __len__(self):
        return len(self.tokens)

    # -- serialization -------------------------------------------------
    def to_json(self):
        return json.dumps({"version": 1, "tokens": self.tokens, "merges": [list(m) for m in self.merges]})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        if obj.get("version") != 1:
            raise ValueError(f"unsupported vocabulary version {obj.get('version')}")
        return cls(list(obj["tokens"]), [tuple(m) for m in obj["merges"]])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())

    # -- encoding ------------------------------------------------------
    def _bpe(self, word):
        if word in self._cache:
            return self._cache[word]
        syms = [BOUNDARY] + list(word)
        while len(syms) > 1:
            best = None
            for i in range(len(syms) - 1):
                r = self.ranks.get((syms[i], syms[i + 1]))
                if r is not None and (best is None or r < best[0]):
                    best = (r, i)
            if best is None:
                break
            i = best[1]
            syms[i:i + 2] = [syms[i] + syms[i + 1]]
        ids = [self.index.get(s, UNK) for s in syms]
        self._cache[word] = ids
        return ids

    def encode(self, text):
        norm = normalize(text)
        ids = []
        for w in norm.split():
            ids.extend(self._bpe(w))
        return TokenSequence(ids, norm)

    def decode(self, ids):
        parts = []
        for i in ids:
            if i in (PAD, BOS, EOS):
                continue
            parts.append(UNK_TEXT if i == UNK or i >= len(self.tokens) else self.tokens[i])
        return normalize("".join(parts).replace(BOUNDARY, " "))


def train_bpe(corpus, vocab_size):
    """Learn merges greedily by pair frequency; ties go to the
    lexicographically smallest merged string."""
    word_freq = {}
    for line in corpus:
        for w in normalize(line).split():
            word_freq[w] = word_freq.get(w, 0) + 1
    alphabet = sorted({BOUNDARY} | {c for w in word_freq for c in w})
    base = len(SPECIALS) + len(alphabet)
    if vocab_size < base:
        raise ValueError(f"vocab_size {vocab_size} is below alphabet+specials ({base})")

    words = [[BOUNDARY] + list(w) for w in sorted(word_freq)]
    freqs = [word_freq[w] for w in sorted(word_freq)]
    pairs = {}
    where = {}
    for wi, syms in enumerate(words):
        for a, b in zip(syms, syms[1:]):
            pairs[(a, b)] = pairs.get((a, b), 0) + freqs[wi]
            where.setdefault((a, b), set()).add(wi)

    merges = []
    new_tokens = set()
    while base + len(new_tokens) < vocab_size:
        live = [(p, c) for p, c in pairs.items() if c > 0]
        if not live:
            log.warning("BPE stopped early at %d tokens (requested %d)", base + len(new_tokens), vocab_size)
            break
        (a, b), _ = min(live, key=lambda pc: (-pc[1], pc[0][0] + pc[0][1], pc[0]))
        merges.append((a, b))
        merged = a + b
        if merged not in alphabet:
            new_tokens.add(merged)
        for wi in sorted(where.pop((a, b), ())):
            syms = words[wi]
            f = freqs[wi]
            for p in zip(syms, syms[1:]):
                pairs[p] -= f
            out = []
            i = 0
            while i < len(syms):
                if i < len(syms) - 1 and syms[i] == a and syms[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[wi] = out
            for p in zip(out, out[1:]):
                pairs[p] = pairs.get(p, 0) + f
                where.setdefault(p, set()).add(wi)
        pairs.pop((a, b), None)

    tokens = list(SPECIALS) + alphabet
    seen = set(tokens)
    for a, b in merges:
        if a + b not in seen:
            tokens.append(a + b)
            seen.add(a + b)
    return Vocabulary(tokens, merges)
