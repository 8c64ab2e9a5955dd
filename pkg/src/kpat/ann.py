"""Inverted-file (IVF) approximate nearest-neighbour search over datastore keys.

A k-means coarse quantizer partitions the keys; a query scans only the
``nprobe`` lists whose centroids are closest.  Distances are exact squared
L2 inside the scanned lists.  ``exact_search`` is the full-scan reference.

File layout (little endian)::

    b"KIVF" | u32 version | u32 dim | u32 n_centroids | u32 nprobe
    | 32-byte datastore checksum | float32 centroids
    | u64 list lengths (n_centroids) | u64 entry ids (count)
"""
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

MAGIC = b"KIVF"
VERSION = 1
_HEAD = struct.Struct("<4sIIII32s")
MAX_ITER = 25


class AnnError(ValueError):
    pass


@dataclass
class NeighborSet:
    ids: np.ndarray        # entry ids, ascending by (distance, id)
    values: np.ndarray     # value token ids
    distances: np.ndarray  # squared L2

    def __len__(self):
        return len(self.ids)


def default_centroids(n):
    return int(min(4096, max(16, math.ceil(math.sqrt(max(n, 1))))))


def _kmeans_pp(x, c, rng):
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = np.square(x - x[chosen[0]]).sum(axis=1, dtype=np.float64)
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for _ in range(1, c):
        tot = d2.sum()
        if tot > 0:
            i = int(rng.choice(n, p=d2 / tot))
        else:
            # remaining points all coincide with a centroid
            free = np.flatnonzero(~taken)
            i = int(free[rng.integers(len(free))])
        chosen.append(i)
        taken[i] = True
        d2 = np.minimum(d2, np.square(x - x[i]).sum(axis=1, dtype=np.float64))
    return x[chosen].copy()


def train_index(sample, n_centroids, seed=0, max_iter=MAX_ITER):
    """k-means++ initialised Lloyd iterations; returns (n_centroids, d) float32."""
    x = np.ascontiguousarray(sample, dtype=np.float32)
    if n_centroids < 1:
        raise AnnError("n_centroids must be >= 1")
    if len(x) < n_centroids:
        raise AnnError(f"sample of {len(x)} keys is smaller than n_centroids={n_centroids}")
    rng = np.random.default_rng(seed)
    cent = _kmeans_pp(x, n_centroids, rng)
    prev = None
    for _ in range(max_iter):
        lab, dist = kernels.assign_nearest(x, cent)
        counts = np.bincount(lab, minlength=n_centroids)
        sums = np.zeros((n_centroids, x.shape[1]), np.float64)
        np.add.at(sums, lab, x)
        new = cent.astype(np.float64)
        nz = counts > 0
        new[nz] = sums[nz] / counts[nz, None]
        if not nz.all():
            # reseed each empty cluster at the currently worst-served point
            dist = dist.copy()
            for j in np.flatnonzero(~nz):
                far = int(np.argmax(dist))
                new[j] = x[far]
                dist[far] = -1.0
        cent = new.astype(np.float32)
        if prev is not None and np.array_equal(lab, prev) and nz.all():
            break
        prev = lab
    return cent


class IvfIndex:
    def __init__(self, centroids, nprobe=32):
        self.centroids = np.ascontiguousarray(centroids, dtype=np.float32)
        if self.centroids.ndim != 2 or len(self.centroids) < 1:
            raise AnnError("need at least one centroid")
        self.nprobe = nprobe
        self.ids = None
        self.starts = None
        self.keys = None
        self.values = None
        self.datastore_checksum = bytes(32)

    @property
    def n_centroids(self):
        return len(self.centroids)

    @property
    def dim(self):
        return self.centroids.shape[1]

    @property
    def populated(self):
        return self.ids is not None

    def list_sizes(self):
        return np.diff(self.starts)

    def add(self, datastore):
        """Assign every datastore entry to its nearest centroid."""
        if datastore.dim != self.dim:
            raise AnnError(f"datastore dim {datastore.dim} != index dim {self.dim}")
        lab, _ = kernels.assign_nearest(datastore.keys, self.centroids)
        self._fill(lab, datastore)
        return self

    def _fill(self, lab, datastore):
        order = np.argsort(lab, kind="stable")
        counts = np.bincount(lab, minlength=self.n_centroids)
        self.starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.ids = order.astype(np.int64)
        self.attach(datastore)

    def attach(self, datastore):
        """Bind the key/value arrays of ``datastore`` (list-contiguous copy)."""
        if len(datastore) != len(self.ids):
            raise AnnError("datastore size does not match the index")
        self.keys = np.ascontiguousarray(datastore.keys[self.ids])
        self.values = datastore.values
        self.datastore_checksum = datastore.checksum()

    def probe(self, query, nprobe):
        d = np.square(self.centroids - query).sum(axis=1, dtype=np.float64)
        return np.lexsort((np.arange(len(d)), d))[:nprobe]

    def search(self, query, k, nprobe=None):
        if not self.populated:
            raise AnnError("index has no entries; call add() first")
        nprobe = self.nprobe if nprobe is None else nprobe
        if k < 1:
            raise AnnError("k must be >= 1")
        nprobe = min(max(int(nprobe), 1), self.n_centroids)
        q = np.ascontiguousarray(query, dtype=np.float32).reshape(-1)
        if q.shape[0] != self.dim:
            raise AnnError(f"query dim {q.shape[0]} != index dim {self.dim}")
        lists = np.sort(self.probe(q, nprobe))
        pos, dist = kernels.scan_lists(self.keys, self.ids, self.starts[lists], self.starts[lists + 1], q, k)
        # scan_lists reports ids; map back to the stored values
        return NeighborSet(pos, self.values[pos], dist)

    # -- serialization -------------------------------------------------
    def to_bytes(self):
        if not self.populated:
            raise AnnError("only populated indexes can be saved")
        head = _HEAD.pack(MAGIC, VERSION, self.dim, self.n_centroids, self.nprobe, self.datastore_checksum)
        return (head + self.centroids.astype("<f4").tobytes()
                + self.list_sizes().astype("<u8").tobytes() + self.ids.astype("<u8").tobytes())

    @classmethod
    def from_bytes(cls, buf, datastore=None):
        magic, version, dim, nc, nprobe, cks = _HEAD.unpack_from(buf, 0)
        if magic != MAGIC:
            raise AnnError(f"bad magic {magic!r}")
        if version != VERSION:
            raise AnnError(f"unsupported index version {version}")
        p = _HEAD.size
        cent = np.frombuffer(buf, "<f4", nc * dim, p).reshape(nc, dim)
        p += nc * dim * 4
        sizes = np.frombuffer(buf, "<u8", nc, p).astype(np.int64)
        p += nc * 8
        count = int(sizes.sum())
        if len(buf) != p + count * 8:
            raise AnnError("index size does not match its header")
        idx = cls(cent, nprobe)
        idx.ids = np.frombuffer(buf, "<u8", count, p).astype(np.int64)
        idx.starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        idx.datastore_checksum = cks
        if datastore is not None:
            if datastore.checksum() != cks:
                raise AnnError("index was built for a different datastore")
            idx.attach(datastore)
        return idx

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path, datastore=None):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read(), datastore)


def build_index(datastore, n_centroids=None, seed=0, nprobe=32, sample_per_centroid=256):
    """Train on a seeded sample of the keys and add every entry."""
    n = len(datastore)
    if n == 0:
        raise AnnError("cannot index an empty datastore")
    c = min(default_centroids(n) if n_centroids is None else n_centroids, n)
    rng = np.random.default_rng([seed, 1])
    m = min(n, max(c, c * sample_per_centroid))
    sample = datastore.keys if m == n else datastore.keys[np.sort(rng.choice(n, m, replace=False))]
    idx = IvfIndex(train_index(sample, c, seed), nprobe)
    return idx.add(datastore)


def exact_search(datastore, query, k):
    """Full scan; same distance arithmetic and tie rule as the IVF scan."""
    if k < 1:
        raise AnnError("k must be >= 1")
    if len(datastore) == 0:
        return NeighborSet(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    q = np.asarray(query, dtype=np.float32).reshape(-1)
    d = np.square(datastore.keys - q).sum(axis=1, dtype=np.float64)
    if k < len(d):
        cut = np.partition(d, k - 1)[k - 1]
        cand = np.flatnonzero(d <= cut)
    else:
        cand = np.arange(len(d))
    order = cand[np.lexsort((cand, d[cand]))][:k]
    return NeighborSet(order.astype(np.int64), datastore.values[order], d[order])


class ExactIndex:
    """Flat index with the same ``search`` interface as IvfIndex."""

    def __init__(self, datastore):
        self.datastore = datastore

    def search(self, query, k, nprobe=None):
        return exact_search(self.datastore, query, k)
