"""Independent reference implementations used as test oracles.

Plain Python loops, no imports from kpat, so a shared bug cannot hide.
"""
import math


def pooled_keys(rows):
    """Look-ahead dot-product pooling: key_i = sum_j softmax_j(r_i . r_j) r_j."""
    n = len(rows)
    d = len(rows[0])
    out = []
    for i in range(n):
        scores = [sum(rows[i][t] * rows[j][t] for t in range(d)) for j in range(n)]
        m = max(scores)
        w = [math.exp(s - m) for s in scores]
        z = sum(w)
        out.append([sum(w[j] / z * rows[j][t] for j in range(n)) for t in range(d)])
    return out


def causal_key(rows):
    """Pooled key of the last row attending over all rows given."""
    last = rows[-1]
    d = len(last)
    scores = [sum(last[t] * r[t] for t in range(d)) for r in rows]
    m = max(scores)
    w = [math.exp(s - m) for s in scores]
    z = sum(w)
    return [sum(w[j] / z * rows[j][t] for j in range(len(rows))) for t in range(d)]


def knn_double_loop(keys, query, k):
    """(id, squared distance) pairs, ascending by (distance, id)."""
    scored = []
    for i, key in enumerate(keys):
        dist = 0.0
        for a, b in zip(key, query):
            dist += (float(a) - float(b)) ** 2
        scored.append((dist, i))
    scored.sort()
    return [(i, d) for d, i in scored[:k]]


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
        prev = cur
    return prev[-1]


def weighted_levenshtein(a, b, cls):
    """Substitution 0.5 within a class (per ``cls`` mapping), 1 otherwise."""
    prev = [float(j) for j in range(len(b) + 1)]
    for i in range(1, len(a) + 1):
        cur = [float(i)] + [0.0] * len(b)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                sub = 0.0
            elif cls[a[i - 1]] == cls[b[j - 1]]:
                sub = 0.5
            else:
                sub = 1.0
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + sub)
        prev = cur
    return prev[-1]


def nearest_word_brute(phones, prons, cls):
    """``prons``: {word: [pron, ...]}; ties go to the alphabetically first word."""
    best = None
    for w in sorted(prons):
        for p in prons[w]:
            d = weighted_levenshtein(phones, p, cls)
            if best is None or d < best[0]:
                best = (d, w)
    return best[1], best[0]


def softmax(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    z = sum(e)
    return [v / z for v in e]
