"""WER, slot recall/accuracy, frequency-binned breakdowns and reports.

Slot recall is the per-utterance multiset hit rate of reference slot words in
the hypothesis, pooled over the corpus.  Slot accuracy is the fraction of
utterances whose slot words appear in the hypothesis as one contiguous,
in-order run.  Both are computed after removing the bundled stop words from
reference slot and hypothesis alike.
"""
import collections
import functools
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

from . import kernels
from .lexicon import DATA_DIR

STOPWORDS_PATH = os.path.join(DATA_DIR, "stopwords.txt")
BINS = ((0, 0), (1, 10), (11, 50), (51, 200), (201, math.inf))
DEFINITIONS = {
    "wer": "total word edits / total reference words",
    "slot_recall": "multiset hit rate of reference slot words in the hypothesis, stop words removed",
    "slot_accuracy": "fraction of utterances whose slot words occur contiguously and in order, stop words removed",
}


class EvalError(ValueError):
    pass


@functools.lru_cache(maxsize=None)
def stopwords(path=STOPWORDS_PATH):
    with open(path, encoding="utf-8") as f:
        return frozenset(w.strip() for w in f if w.strip() and not w.startswith("#"))


def _words(x):
    return x.split() if isinstance(x, str) else list(x)


def word_edits(ref, hyp):
    ref, hyp = _words(ref), _words(hyp)
    ids = {}
    a = [ids.setdefault(w, len(ids)) for w in ref]
    b = [ids.setdefault(w, len(ids)) for w in hyp]
    return kernels.edit_distance(a, b)


def wer(ref, hyp):
    ref = _words(ref)
    if not ref:
        raise EvalError("empty reference")
    return word_edits(ref, hyp) / len(ref)


def corpus_wer(refs, hyps):
    if len(refs) != len(hyps):
        raise EvalError(f"{len(refs)} references but {len(hyps)} hypotheses")
    edits = sum(word_edits(r, h) for r, h in zip(refs, hyps))
    n = sum(len(_words(r)) for r in refs)
    if n == 0:
        raise EvalError("empty reference corpus")
    return edits / n


def _content(words, stop):
    return [w for w in words if w not in stop]


def slot_scores(utt, hyp, stop=None):
    """(hits, slot words, exact) for one utterance."""
    stop = stopwords() if stop is None else stop
    h = _content(_words(hyp), stop)
    hits = total = 0
    exact = True
    for i in range(len(utt.slots)):
        raw = utt.slot_text(i).split()
        s = _content(raw, stop) or raw
        hb = h if s is not raw else _words(hyp)
        have = collections.Counter(hb)
        for w, c in collections.Counter(s).items():
            hits += min(c, have[w])
        total += len(s)
        n = len(s)
        exact &= any(hb[j:j + n] == s for j in range(len(hb) - n + 1))
    return hits, total, exact


def slot_metrics(utterances, hyps):
    if len(utterances) != len(hyps):
        raise EvalError(f"{len(utterances)} utterances but {len(hyps)} hypotheses")
    hits = total = exact = 0
    for u, h in zip(utterances, hyps):
        a, b, c = slot_scores(u, h)
        hits += a
        total += b
        exact += c
    recall = hits / total if total else 1.0
    accuracy = exact / len(utterances) if utterances else 1.0
    return recall, accuracy


def train_frequencies(train):
    """Training-set count of each slot (domain, text)."""
    freq = collections.Counter()
    for u in train:
        for i, s in enumerate(u.slots):
            freq[(s.domain, u.slot_text(i))] += 1
    return freq


def bin_of(f):
    for i, (lo, hi) in enumerate(BINS):
        if lo <= f <= hi:
            return i
    raise EvalError(f"negative frequency {f}")


def bin_label(i):
    lo, hi = BINS[i]
    if hi == 0:
        return "oov"
    return f"{lo}+" if math.isinf(hi) else f"{lo}-{hi}"


def frequency_bins(freq, test, systems):
    """Per-bin slot accuracy and WER.

    ``systems`` maps a name (e.g. "pat", "kpat") to hypotheses aligned with
    ``test``.  Each utterance falls in the bin of its first slot's training
    frequency.
    """
    groups = collections.defaultdict(list)
    for j, u in enumerate(test):
        f = freq.get((u.slots[0].domain, u.slot_text(0)), 0) if u.slots else 0
        groups[bin_of(f)].append(j)
    rows = []
    for i in range(len(BINS)):
        idx = groups.get(i, [])
        row = {"bin": bin_label(i), "lo": BINS[i][0], "hi": None if math.isinf(BINS[i][1]) else BINS[i][1], "n": len(idx)}
        for name, hyps in systems.items():
            if idx:
                row[f"wer_{name}"] = corpus_wer([test[j].ref for j in idx], [hyps[j] for j in idx])
                row[f"acc_{name}"] = slot_metrics([test[j] for j in idx], [hyps[j] for j in idx])[1]
            else:
                row[f"wer_{name}"] = row[f"acc_{name}"] = None
        rows.append(row)
    return rows


def test_fingerprint(utterances):
    h = hashlib.sha256()
    for u in utterances:
        h.update(u.ref.encode("utf-8") + b"\n")
    return h.hexdigest()[:16]


@dataclass
class EvalReport:
    wer: float
    slot_recall: float = None
    slot_accuracy: float = None
    n_utterances: int = 0
    n_ref_words: int = 0
    domains: dict = field(default_factory=dict)
    bins: list = field(default_factory=list)
    test_set: str = None
    baseline: str = None
    werr: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.wer < 0:
            raise EvalError("negative WER")
        for v in (self.slot_recall, self.slot_accuracy):
            if v is not None and not 0.0 <= v <= 1.0:
                raise EvalError(f"rate {v} outside [0, 1]")

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def to_tsv(self):
        # systems in insertion order, baselines first
        names = list(dict.fromkeys(k[4:] for r in self.bins for k in r if k.startswith("wer_")))
        cols = [f"wer_{n}" for n in names] + [f"acc_{n}" for n in names]
        lines = ["\t".join(["bin", "n"] + cols)]
        for r in self.bins:
            vals = ["" if r.get(c) is None else f"{r[c]:.4f}" for c in cols]
            lines.append("\t".join([r["bin"], str(r["n"])] + vals))
        return "\n".join(lines) + "\n"


def evaluate(test, hyps, freq=None, systems=None, meta=None, name="hyp"):
    """Report for ``hyps`` on ``test``; ``systems`` adds extra hypothesis
    sets to the frequency bins, where the evaluated one is called ``name``."""
    if len(test) != len(hyps):
        raise EvalError(f"{len(test)} utterances but {len(hyps)} hypotheses")
    recall, acc = slot_metrics(test, hyps)
    by_dom = collections.defaultdict(list)
    for j, u in enumerate(test):
        by_dom[u.domain].append(j)
    domains = {}
    for d, idx in sorted(by_dom.items(), key=lambda kv: str(kv[0])):
        r, a = slot_metrics([test[j] for j in idx], [hyps[j] for j in idx])
        domains[str(d)] = {"wer": corpus_wer([test[j].ref for j in idx], [hyps[j] for j in idx]),
                           "slot_recall": r, "slot_accuracy": a, "n": len(idx)}
    bins = []
    if freq is not None:
        bins = frequency_bins(freq, test, dict(systems or {}, **{name: hyps}))
    return EvalReport(
        wer=corpus_wer([u.ref for u in test], hyps), slot_recall=recall, slot_accuracy=acc,
        n_utterances=len(test), n_ref_words=sum(len(u.ref.split()) for u in test),
        domains=domains, bins=bins, test_set=test_fingerprint(test),
        meta=dict(meta or {}, definitions=DEFINITIONS),
    )


def werr(base_wer, cand_wer):
    if base_wer <= 0:
        raise EvalError("baseline WER must be positive for WERR")
    return (base_wer - cand_wer) / base_wer * 100.0


def compare_report(baseline, candidate, name="baseline"):
    """WERR of ``candidate`` against ``baseline`` plus metric deltas; also
    fills ``candidate.werr``/``candidate.baseline``."""
    if baseline.test_set and candidate.test_set and baseline.test_set != candidate.test_set:
        raise EvalError("reports are for different test sets")
    out = {"werr": werr(baseline.wer, candidate.wer), "delta_wer": candidate.wer - baseline.wer}
    for m in ("slot_recall", "slot_accuracy"):
        a, b = getattr(baseline, m), getattr(candidate, m)
        out[f"delta_{m}"] = None if a is None or b is None else b - a
    candidate.werr = out["werr"]
    candidate.baseline = name
    return out
