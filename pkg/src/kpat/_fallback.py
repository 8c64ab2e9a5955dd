"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and results; selected automatically when the extension is
not built, or forced with ``KPAT_PURE_PYTHON=1``.
"""
import numpy as np


def _sub_cost(a, b, classes):
    if a == b:
        return 0.0
    if classes[a] >= 0 and classes[a] == classes[b]:
        return 0.5
    return 1.0


def weighted_edit_distance(a, b, classes):
    row = [float(j) for j in range(len(b) + 1)]
    for i in range(1, len(a) + 1):
        diag, row[0] = row[0], float(i)
        for j in range(1, len(b) + 1):
            up = row[j]
            row[j] = min(diag + _sub_cost(a[i - 1], b[j - 1], classes), up + 1.0, row[j - 1] + 1.0)
            diag = up
    return row[len(b)]


def nearest_pron(query, flat, offsets, classes, band):
    # Vectorised DP across every candidate at once; exhaustive, so the band
    # prefilter is unnecessary here.
    del band
    query = np.asarray(query)
    classes = np.asarray(classes)
    offsets = np.asarray(offsets)
    lens = np.diff(offsets)
    n = len(lens)
    if n == 0:
        return -1, np.inf
    maxlen = int(lens.max())
    cols = np.arange(maxlen)
    valid = cols[None, :] < lens[:, None]
    idx = np.minimum(offsets[:-1, None] + cols[None, :], len(flat) - 1)
    cand = np.where(valid, np.asarray(flat)[idx], -1)
    cand_cls = np.where(valid, classes[np.maximum(cand, 0)], -2)

    prev = np.repeat(np.arange(maxlen + 1, dtype=np.float64)[:, None], n, axis=1)
    for i, ph in enumerate(query, start=1):
        same_cls = (cand_cls == classes[ph]) & (classes[ph] >= 0)
        sub = np.where(cand == ph, 0.0, np.where(same_cls, 0.5, 1.0)).T
        cur = np.empty_like(prev)
        cur[0] = i
        for j in range(1, maxlen + 1):
            cur[j] = np.minimum(np.minimum(prev[j - 1] + sub[j - 1], prev[j] + 1.0), cur[j - 1] + 1.0)
        prev = cur
    dist = prev[lens, np.arange(n)]
    best = int(np.argmin(dist))
    return best, float(dist[best])


def edit_distance(a, b):
    a, b = list(a), list(b)
    row = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        diag, row[0] = row[0], i
        for j in range(1, len(b) + 1):
            up = row[j]
            row[j] = min(diag + (a[i - 1] != b[j - 1]), up + 1, row[j - 1] + 1)
            diag = up
    return row[len(b)]


def scan_lists(keys, ids, starts, ends, query, k):
    sel = np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)] or [np.zeros(0, np.int64)])
    if len(sel) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.float64)
    d = np.square(keys[sel] - query).sum(axis=1, dtype=np.float64)
    eid = np.asarray(ids)[sel]
    order = np.lexsort((eid, d))[:k]
    return eid[order].astype(np.int64), d[order]


def assign_nearest(points, centroids, chunk=2048):
    n = len(points)
    lab = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for s in range(0, n, chunk):
        diff = points[s:s + chunk, None, :] - centroids[None, :, :]
        d = np.square(diff).sum(axis=2, dtype=np.float64)
        lab[s:s + chunk] = np.argmin(d, axis=1)
        dist[s:s + chunk] = d[np.arange(len(d)), lab[s:s + chunk]]
    return lab, dist
