"""k-PAT decoding: PAT greedy decoding interpolated with a kNN distribution.

At each step the causal pooled key of the decoded prefix retrieves k
neighbours; their values get weight exp(-d / T) (d is squared L2) and the
result is mixed with the model distribution as (1 - lambda) p_pat +
lambda p_knn.
"""
import json
import logging
from dataclasses import dataclass

import numpy as np

from .datastore import query_key
from .model import greedy_loop
from .tokenizer import TokenSequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InterpolationParams:
    lam: float = 0.5
    k: int = 10
    temperature: float = 1.0
    nprobe: int = 32

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda {self.lam} outside [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.temperature > 0:
            raise ValueError("knn temperature must be > 0")
        if self.nprobe < 1:
            raise ValueError("nprobe must be >= 1")


def knn_distribution(neighbors, temperature, vocab_size):
    if len(neighbors) == 0:
        raise ValueError("empty neighbour set")
    d = np.asarray(neighbors.distances, dtype=np.float64)
    w = np.exp(-(d - d.min()) / temperature)
    p = np.zeros(vocab_size, dtype=np.float64)
    np.add.at(p, np.asarray(neighbors.values, dtype=np.int64), w)
    return p / p.sum()


def interpolate(p_pat, p_knn, lam):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    if lam == 0.0:
        return np.asarray(p_pat, dtype=np.float64).copy()
    if lam == 1.0:
        return np.asarray(p_knn, dtype=np.float64).copy()
    return (1.0 - lam) * np.asarray(p_pat, np.float64) + lam * np.asarray(p_knn, np.float64)


def _top(p, n=5):
    idx = np.lexsort((np.arange(len(p)), -p))[:n]
    return [[int(i), round(float(p[i]), 6)] for i in idx]


def decode_kpat(model, datastore, index, asr_tokens, phonemes, params, max_len=None, trace=None):
    """Greedy k-PAT decoding of a batch.

    ``index`` is anything with ``search(query, k, nprobe)`` (IvfIndex or
    ExactIndex) over ``datastore``.  When ``trace`` is a list, one record per
    utterance with per-step details is appended to it.
    """
    if datastore is not None:
        datastore.check_model(model)
    lam = params.lam
    if datastore is None or len(datastore) == 0:
        if lam > 0:
            log.warning("empty datastore; decoding with lambda=0")
        lam = 0.0
    steps = [[] for _ in asr_tokens]
    vocab_size = model.cfg.text_vocab

    def hook(step, states, probs, active):
        out = probs.astype(np.float64)
        for i in np.flatnonzero(active):
            p_pat = out[i]
            used, values, dists = 0.0, [], []
            if lam > 0:
                nb = index.search(query_key(states[i, :step + 1]), params.k, params.nprobe)
                if len(nb):
                    out[i] = interpolate(p_pat, knn_distribution(nb, params.temperature, vocab_size), lam)
                    used, values, dists = lam, nb.values.tolist(), nb.distances.tolist()
            if trace is not None:
                steps[i].append({
                    "token": int(np.argmax(out[i])),
                    "p_pat_top5": _top(p_pat),
                    "knn_values": [int(v) for v in values],
                    "knn_distances": [round(float(x), 6) for x in dists],
                    "lambda_used": used,
                })
        return out

    max_len = model.cfg.max_len if max_len is None else max_len
    outs = greedy_loop(model, asr_tokens, phonemes, max_len, hook)
    if trace is not None:
        for a, o, st in zip(asr_tokens, outs, steps):
            trace.append({"input": [int(t) for t in a], "output": o, "per_step": st})
    return [TokenSequence(o) for o in outs]


def write_trace(path, records, vocab=None):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            if vocab is not None:
                r = dict(r, input_text=vocab.decode(r["input"]), output_text=vocab.decode(r["output"]))
            f.write(json.dumps(r, sort_keys=True) + "\n")
