"""Regenerate tests/fixtures/expected.json from the independent oracles.

Inputs come from Python's ``random`` module with fixed seeds and are stored
alongside the expected outputs, so the tests never recompute the oracle.
"""
import json
import os
import random
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "tests"))
import oracles  # noqa: E402

LEXICON = os.path.join(HERE, "..", "src", "kpat", "data", "lexicon.dict")
CLASSES = {}
for cls, phones in (("vowel", "AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW"), ("stop", "B D G K P T"),
                    ("fricative", "CH DH F HH JH S SH TH V Z ZH"), ("nasal", "M N NG"), ("liquid", "L R W Y")):
    for p in phones.split():
        CLASSES[p] = cls


def read_lexicon(path):
    prons = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith(";;;") or not line.strip():
                continue
            w, ph = line.rstrip("\n").split("  ", 1)
            prons.setdefault(w.lower(), []).append(ph.split())
    return prons


def main():
    rng = random.Random(20240)
    out = {}

    cases = []
    for _ in range(100):
        o, d = rng.randint(2, 8), rng.randint(2, 6)
        rows = [[round(rng.gauss(0, 1), 6) for _ in range(d)] for _ in range(o)]
        cases.append({"D": rows, "keys": oracles.pooled_keys(rows), "causal_last": oracles.causal_key(rows)})
    out["pooling"] = cases
    out["pooling_identity"] = oracles.pooled_keys([[1.0, 0.0], [0.0, 1.0]])

    keys = [[round(rng.uniform(-1, 1), 4) for _ in range(8)] for _ in range(300)]
    queries = [[round(rng.uniform(-1, 1), 4) for _ in range(8)] for _ in range(20)]
    out["search"] = {"keys": keys, "queries": queries,
                     "top7": [oracles.knn_double_loop(keys, q, 7) for q in queries]}

    prons = read_lexicon(LEXICON)
    phones = sorted(CLASSES)
    near = []
    for _ in range(25):
        q = [rng.choice(phones) for _ in range(rng.randint(1, 9))]
        w, dist = oracles.nearest_word_brute(q, prons, CLASSES)
        near.append({"phones": q, "word": w, "distance": dist})
    out["nearest_word"] = near

    pairs = []
    vocab = "a b c d e f".split()
    for _ in range(50):
        r = [rng.choice(vocab) for _ in range(rng.randint(1, 10))]
        h = [rng.choice(vocab) for _ in range(rng.randint(0, 10))]
        pairs.append({"ref": " ".join(r), "hyp": " ".join(h), "edits": oracles.levenshtein(r, h)})
    out["wer_pairs"] = pairs

    w = [r ** -1.2 for r in range(1, 1001)]
    out["zipf_top_decile_mass"] = sum(w[:100]) / sum(w)

    with open(os.path.join(HERE, "..", "tests", "fixtures", "expected.json"), "w") as f:
        json.dump(out, f, indent=0, sort_keys=True)
        f.write("\n")
    print("zipf top-decile mass", out["zipf_top_decile_mass"], "identity", out["pooling_identity"][0])


if __name__ == "__main__":
    main()
