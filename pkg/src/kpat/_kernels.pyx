# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: weighted phoneme edit distance, nearest-pronunciation
search, word-level Levenshtein, inverted-list scans and nearest-centroid
assignment.  ``kpat._fallback`` mirrors every function here."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _sub_cost(int a, int b, const int[::1] classes) noexcept nogil:
    if a == b:
        return 0.0
    if classes[a] >= 0 and classes[a] == classes[b]:
        return 0.5
    return 1.0


cdef double _wdist(const int[::1] a, Py_ssize_t a0, Py_ssize_t na,
                   const int[::1] b, Py_ssize_t b0, Py_ssize_t nb,
                   const int[::1] classes, double* row) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double diag, up, best, c
    for j in range(nb + 1):
        row[j] = <double>j
    for i in range(1, na + 1):
        diag = row[0]
        row[0] = <double>i
        for j in range(1, nb + 1):
            up = row[j]
            best = diag + _sub_cost(a[a0 + i - 1], b[b0 + j - 1], classes)
            c = up + 1.0
            if c < best:
                best = c
            c = row[j - 1] + 1.0
            if c < best:
                best = c
            row[j] = best
            diag = up
    return row[nb]


def weighted_edit_distance(const int[::1] a, const int[::1] b, const int[::1] classes):
    cdef Py_ssize_t nb = b.shape[0]
    cdef double* row = <double*>malloc((nb + 1) * sizeof(double))
    cdef double d
    try:
        d = _wdist(a, 0, a.shape[0], b, 0, nb, classes, row)
    finally:
        free(row)
    return d


def nearest_pron(const int[::1] query, const int[::1] flat, const long long[::1] offsets,
                 const int[::1] classes, int band):
    """Index of the first pronunciation at minimum distance, and that distance.

    Candidates within ``band`` of the query length are scanned first; the rest
    are visited only when their length gap could still beat the best so far,
    so the result equals a brute-force scan."""
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t nq = query.shape[0]
    cdef Py_ssize_t i, L, maxlen = 0, gap
    cdef double d, best = 1e300
    cdef Py_ssize_t best_i = -1
    for i in range(n):
        L = offsets[i + 1] - offsets[i]
        if L > maxlen:
            maxlen = L
    cdef double* row = <double*>malloc((maxlen + 1) * sizeof(double))
    try:
        for i in range(n):
            L = offsets[i + 1] - offsets[i]
            gap = L - nq if L > nq else nq - L
            if gap > band:
                continue
            d = _wdist(query, 0, nq, flat, offsets[i], L, classes, row)
            if d < best:
                best = d
                best_i = i
        for i in range(n):
            L = offsets[i + 1] - offsets[i]
            gap = L - nq if L > nq else nq - L
            if gap <= band or gap > best or (gap == best and i > best_i):
                continue
            d = _wdist(query, 0, nq, flat, offsets[i], L, classes, row)
            if d < best or (d == best and i < best_i):
                best = d
                best_i = i
    finally:
        free(row)
    return best_i, best


def edit_distance(const long long[::1] a, const long long[::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i, j
    cdef long long diag, up, best
    cdef long long* row = <long long*>malloc((nb + 1) * sizeof(long long))
    try:
        for j in range(nb + 1):
            row[j] = j
        for i in range(1, na + 1):
            diag = row[0]
            row[0] = i
            for j in range(1, nb + 1):
                up = row[j]
                best = diag + (0 if a[i - 1] == b[j - 1] else 1)
                if up + 1 < best:
                    best = up + 1
                if row[j - 1] + 1 < best:
                    best = row[j - 1] + 1
                row[j] = best
                diag = up
        return row[nb]
    finally:
        free(row)


cdef inline double _sqdist(const float[:, ::1] x, Py_ssize_t r, const float[::1] q) noexcept nogil:
    cdef Py_ssize_t j, d = q.shape[0]
    cdef double acc = 0.0
    cdef float t
    for j in range(d):
        t = x[r, j] - q[j]
        acc += <double>(t * t)
    return acc


def scan_lists(const float[:, ::1] keys, const long long[::1] ids,
               const long long[::1] starts, const long long[::1] ends,
               const float[::1] query, int k):
    """Top-k (distance, id) over rows ``keys[starts[i]:ends[i]]``, ascending,
    ties broken by lower id."""
    cdef long long[::1] out_id = np.full(k, -1, dtype=np.int64)
    cdef double[::1] out_d = np.full(k, np.inf, dtype=np.float64)
    cdef Py_ssize_t filled = 0, s, r, p
    cdef double d
    cdef long long eid
    with nogil:
        for s in range(starts.shape[0]):
            for r in range(starts[s], ends[s]):
                d = _sqdist(keys, r, query)
                eid = ids[r]
                if filled == k and (d > out_d[k - 1] or (d == out_d[k - 1] and eid > out_id[k - 1])):
                    continue
                p = filled if filled < k else k - 1
                while p > 0 and (out_d[p - 1] > d or (out_d[p - 1] == d and out_id[p - 1] > eid)):
                    if p < k:
                        out_d[p] = out_d[p - 1]
                        out_id[p] = out_id[p - 1]
                    p -= 1
                out_d[p] = d
                out_id[p] = eid
                if filled < k:
                    filled += 1
    return np.asarray(out_id[:filled]), np.asarray(out_d[:filled])


def assign_nearest(const float[:, ::1] points, const float[:, ::1] centroids):
    """Nearest centroid (lowest index on ties) and its squared distance per point."""
    cdef Py_ssize_t n = points.shape[0], c = centroids.shape[0], dim = points.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double acc, best
    cdef float diff
    cdef long long[::1] lab = np.empty(n, dtype=np.int64)
    cdef double[::1] dist = np.empty(n, dtype=np.float64)
    with nogil:
        for i in range(n):
            best = 1e300
            for j in range(c):
                acc = 0.0
                for t in range(dim):
                    diff = points[i, t] - centroids[j, t]
                    acc += <double>(diff * diff)
                if acc < best:
                    best = acc
                    lab[i] = j
            dist[i] = best
    return np.asarray(lab), np.asarray(dist)
