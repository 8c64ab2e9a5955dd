"""Synthetic slot utterances with simulated ASR errors.

References are carrier-phrase templates filled with domain entities drawn
with Zipf weights.  The ASR hypothesis is made by corrupting the reference
at the phoneme level (substitutions biased toward the same phoneme class,
insertions, deletions) and projecting each damaged word back onto the
closest-sounding lexicon word, so errors are real, similar-sounding words.
"""
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import lexicon as lx

DOMAINS = ("full_names", "airports", "street_names", "cities_states")
CATALOG_DIR = os.path.join(lx.DATA_DIR, "catalogs")
TEMPLATES_PATH = os.path.join(lx.DATA_DIR, "templates.tsv")
SPLIT_CODES = {"train": 0, "dev": 1, "test": 2, "oov": 3}


class CorpusError(ValueError):
    pass


@dataclass
class Slot:
    start: int
    end: int
    domain: str


@dataclass
class Utterance:
    ref: str
    asr: str
    slots: list
    split: str
    freq_rank: int
    domain: str = None

    def __post_init__(self):
        if not self.ref or not self.asr:
            raise CorpusError("reference and ASR text must be non-empty")
        self.slots = [s if isinstance(s, Slot) else Slot(**s) for s in self.slots]
        for s in self.slots:
            if not 0 <= s.start < s.end <= len(self.ref):
                raise CorpusError(f"slot span {s} outside reference {self.ref!r}")

    def slot_text(self, i=0):
        s = self.slots[i]
        return self.ref[s.start:s.end]

    def to_json(self):
        d = asdict(self)
        if d["domain"] is None:
            del d["domain"]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


@dataclass
class SlotCatalog:
    entities: dict                       # domain -> list of entity strings
    weights: dict = field(default=None)  # domain -> array of positive weights

    def __post_init__(self):
        if self.weights is None:
            self.weights = {d: np.ones(len(e)) for d, e in self.entities.items()}
        for d, ents in self.entities.items():
            if any(not e.strip() for e in ents):
                raise CorpusError(f"empty entity in domain {d}")
            if np.any(np.asarray(self.weights[d]) <= 0):
                raise CorpusError(f"non-positive weight in domain {d}")

    @property
    def domains(self):
        return [d for d in self.entities if self.entities[d]]

    def size(self):
        return sum(len(v) for v in self.entities.values())

    def zipf(self, s, rng=None):
        """Copy with weights ∝ rank^-s; ranks follow a seeded shuffle of each
        domain's list when ``rng`` is given, else list order."""
        ents, w = {}, {}
        for d, lst in self.entities.items():
            lst = list(lst)
            if rng is not None:
                lst = [lst[i] for i in rng.permutation(len(lst))]
            ents[d] = lst
            w[d] = np.arange(1, len(lst) + 1, dtype=np.float64) ** -s
        return SlotCatalog(ents, w)

    def rank(self, domain, entity):
        return self.entities[domain].index(entity) + 1


def load_catalogs(directory=CATALOG_DIR, domains=DOMAINS):
    ents = {}
    for d in domains:
        with open(os.path.join(directory, f"{d}.txt"), encoding="utf-8") as f:
            ents[d] = [" ".join(line.split()).lower() for line in f if line.strip()]
    return SlotCatalog(ents)


def load_templates(path=TEMPLATES_PATH):
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                dom, tmpl = line.rstrip("\n").split("\t")
                out.append((dom, tmpl))
    return out


@dataclass
class NoiseParams:
    sub: float = 0.10
    ins: float = 0.03
    dele: float = 0.03
    class_bias: float = 0.7
    slot_multiplier: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sub", "ins", "dele", "class_bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise CorpusError(f"noise {name}={v} outside [0, 1]")
        if self.sub + self.dele > 0.9:
            raise CorpusError("sub + dele must stay <= 0.9")
        if self.slot_multiplier < 0:
            raise CorpusError("slot_multiplier must be non-negative")

    @property
    def zero(self):
        return self.sub == 0 and self.ins == 0 and self.dele == 0


def generate_reference(catalog, templates, rng, domain=None, entity=None):
    """Fill a sampled template with a weighted-sampled entity.

    Returns (reference text, slot, domain, entity).
    """
    if not catalog.domains:
        raise CorpusError("empty slot catalog")
    if not templates:
        raise CorpusError("no templates")
    if domain is None:
        domain = catalog.domains[rng.integers(len(catalog.domains))]
    options = [t for d, t in templates if d == domain] or [t for _, t in templates]
    tmpl = options[rng.integers(len(options))]
    if entity is None:
        w = np.asarray(catalog.weights[domain], dtype=np.float64)
        entity = catalog.entities[domain][rng.choice(len(w), p=w / w.sum())]
    pre, post = tmpl.split("{entity}")
    ref = " ".join((pre + entity + post).split())
    start = len(" ".join(pre.split()) + " ") if pre.strip() else 0
    return ref, Slot(start, start + len(entity), domain), domain, entity


class Corruptor:
    """Phoneme-level noise plus projection onto the lexicon."""

    def __init__(self, lexicon):
        self.lexicon = lexicon
        self._cache = {}
        self._by_class = {}
        for p in lx.PHONES:
            self._by_class.setdefault(lx.PHONE_CLASS[p], []).append(p)

    def nearest(self, phones):
        key = tuple(phones)
        w = self._cache.get(key)
        if w is None:
            w = lx.nearest_word(phones, self.lexicon)
            self._cache[key] = w
        return w

    def _noisy(self, phones, sub, ins, dele, bias, rng):
        out = []
        for p in phones:
            r = rng.random()
            if r < dele:
                pass
            elif r < dele + sub:
                if rng.random() < bias:
                    pool = [q for q in self._by_class[lx.PHONE_CLASS[p]] if q != p]
                else:
                    pool = [q for q in lx.PHONES if q != p]
                out.append(pool[rng.integers(len(pool))])
            else:
                out.append(p)
            if rng.random() < ins:
                out.append(lx.PHONES[rng.integers(len(lx.PHONES))])
        return out

    def corrupt(self, reference, noise, rng, slot_words=()):
        """ASR-style hypothesis for ``reference``; words whose index is in
        ``slot_words`` are corrupted at ``slot_multiplier`` times the rate."""
        words = reference.split()
        out = []
        for i, w in enumerate(words):
            m = noise.slot_multiplier if i in slot_words else 1.0
            sub = min(noise.sub * m, 0.9)
            dele = min(noise.dele * m, 0.9 - sub)
            ins = min(noise.ins * m, 1.0)
            phones = lx.word_phones(w, self.lexicon)
            noisy = self._noisy(phones, sub, ins, dele, noise.class_bias, rng)
            if noisy == phones and w in self.lexicon:
                out.append(w)
            elif noisy:
                out.append(self.nearest(noisy))
        if not out:
            # every word deleted; keep the closest word to the whole reference
            out.append(self.nearest(lx.word_phones(words[0], self.lexicon)))
        return " ".join(out)


def corrupt(reference, lexicon, noise, rng=None, slot_words=()):
    rng = np.random.default_rng(noise.seed) if rng is None else rng
    return Corruptor(lexicon).corrupt(reference, noise, rng, slot_words)


def _slot_word_indices(ref, slot):
    first = len(ref[:slot.start].split())
    return set(range(first, first + len(ref[slot.start:slot.end].split())))


@dataclass
class CorpusSizes:
    train: int = 8000
    dev: int = 1000
    test: int = 1000
    variants: int = 2
    oov_entities: int = 25       # per domain
    oov_refs_per_entity: int = 2


def build_corpus(catalog, templates, sizes, noise, seed, lexicon, zipf_s=1.2, oov_entities=None):
    """Train/dev/test/oov utterance lists.

    A held-out set of entities (``sizes.oov_entities`` per domain, or
    ``oov_entities`` when given) never appears in train/dev/test; the rest
    are ranked by a seeded shuffle and sampled with Zipf weights.
    """
    rng = np.random.default_rng([seed, 99])
    if oov_entities is None:
        oov_entities = {}
        for d in catalog.domains:
            ents = catalog.entities[d]
            pick = rng.choice(len(ents), size=min(sizes.oov_entities, len(ents) - 1), replace=False)
            oov_entities[d] = [ents[i] for i in sorted(pick)]
    remaining = {d: [e for e in catalog.entities[d] if e not in set(oov_entities.get(d, ()))]
                 for d in catalog.domains}
    for d in catalog.domains:
        if not remaining[d]:
            raise CorpusError(f"no training entities left in domain {d}")
    ranked = SlotCatalog(remaining).zipf(zipf_s, rng)
    held = SlotCatalog({d: v for d, v in oov_entities.items() if v})
    for d in held.domains:
        if set(held.entities[d]) & set(ranked.entities[d]):
            raise CorpusError(f"OOV entities overlap training entities in {d}")

    corruptor = Corruptor(lexicon)
    out = {"train": [], "dev": [], "test": [], "oov": []}

    def emit(split, idx, cat, n_variants, domain=None, entity=None):
        r = np.random.default_rng([seed, SPLIT_CODES[split], idx])
        ref, slot, dom, ent = generate_reference(cat, templates, r, domain, entity)
        rank = ranked.rank(dom, ent) if split != "oov" else 0
        slot_idx = _slot_word_indices(ref, slot)
        for _ in range(n_variants):
            asr = corruptor.corrupt(ref, noise, r, slot_idx)
            out[split].append(Utterance(ref, asr, [slot], split, rank, dom))

    for split, n in (("train", sizes.train), ("dev", sizes.dev), ("test", sizes.test)):
        nv = sizes.variants if split == "train" else 1
        for i in range(n):
            emit(split, i, ranked, nv)
    i = 0
    for d in held.domains:
        for ent in held.entities[d]:
            for _ in range(sizes.oov_refs_per_entity):
                emit("oov", i, held, 1, d, ent)
                i += 1
    return out


def write_jsonl(path, utterances):
    with open(path, "w", encoding="utf-8") as f:
        for u in utterances:
            f.write(u.to_json() + "\n")


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [Utterance.from_json(line) for line in f if line.strip()]
