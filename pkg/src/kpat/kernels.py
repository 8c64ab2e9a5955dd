"""Hot-loop kernels, compiled when available.

The Cython extension ``kpat._kernels`` is used if it imports; otherwise the
numpy implementations in ``kpat._fallback`` are.  Setting ``KPAT_PURE_PYTHON=1``
forces the fallback.  ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _fallback

if os.environ.get("KPAT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def weighted_edit_distance(a, b, classes):
    return _impl.weighted_edit_distance(
        np.ascontiguousarray(a, dtype=np.int32),
        np.ascontiguousarray(b, dtype=np.int32),
        np.ascontiguousarray(classes, dtype=np.int32),
    )


def nearest_pron(query, flat, offsets, classes, band=3):
    return _impl.nearest_pron(
        np.ascontiguousarray(query, dtype=np.int32),
        np.ascontiguousarray(flat, dtype=np.int32),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(classes, dtype=np.int32),
        int(band),
    )


def edit_distance(a, b):
    """Unit-cost Levenshtein distance between two integer sequences."""
    return int(_impl.edit_distance(
        np.ascontiguousarray(a, dtype=np.int64), np.ascontiguousarray(b, dtype=np.int64)
    ))


def scan_lists(keys, ids, starts, ends, query, k):
    return _impl.scan_lists(
        np.ascontiguousarray(keys, dtype=np.float32),
        np.ascontiguousarray(ids, dtype=np.int64),
        np.ascontiguousarray(starts, dtype=np.int64),
        np.ascontiguousarray(ends, dtype=np.int64),
        np.ascontiguousarray(query, dtype=np.float32),
        int(k),
    )


def assign_nearest(points, centroids):
    return _impl.assign_nearest(
        np.ascontiguousarray(points, dtype=np.float32),
        np.ascontiguousarray(centroids, dtype=np.float32),
    )
