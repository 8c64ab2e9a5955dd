"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from kpat import _fallback
from kpat import lexicon as lx

try:
    from kpat import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    lex = lx.default_lexicon()
    _, flat, offsets = lex._search_index()
    classes = np.ascontiguousarray(lx.CLASS_IDS, dtype=np.int32)
    query = np.array([lx.PHONE_ID[p] for p in "B EH D F ER D".split()], np.int32)
    a = rng.integers(0, 50, 40).astype(np.int64)
    b = rng.integers(0, 50, 40).astype(np.int64)
    keys = rng.normal(size=(20_000, 64)).astype(np.float32)
    ids = np.arange(len(keys), dtype=np.int64)
    starts = np.arange(0, 20_000, 2_500, dtype=np.int64)
    q = rng.normal(size=64).astype(np.float32)
    cent = rng.normal(size=(64, 64)).astype(np.float32)
    return {
        "edit_distance (40x40 words)": lambda m: m.edit_distance(a, b),
        "weighted_edit_distance": lambda m: m.weighted_edit_distance(query, query[::-1].copy(), classes),
        f"nearest_pron ({len(lex)} words)": lambda m: m.nearest_pron(query, flat, offsets, classes, 3),
        "scan_lists (20k x 64, k=10)": lambda m: m.scan_lists(keys, ids, starts, starts + 2_500, q, 10),
        "assign_nearest (20k x 64 centroids)": lambda m: m.assign_nearest(keys, cent),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if _kernels is None:
        print("compiled kernels not built; nothing to compare")
        return
    print(f"{'kernel':40s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t = {}
        for label, mod in (("cython", _kernels), ("python", _fallback)):
            fn(mod)
            n = 3
            t[label] = min(timeit.repeat(lambda: fn(mod), number=n, repeat=args.repeat)) / n * 1e3
        print(f"{name:40s} {t['cython']:10.3f} {t['python']:10.3f} {t['python'] / t['cython']:7.1f}x")


if __name__ == "__main__":
    main()
