"""Datastore of pooled decoder states (keys) and next target tokens (values).

Keys are built from a teacher-forced pass: the decoder states of an
utterance are pooled with an unscaled dot-product self-attention over all
positions (look-ahead), and the pooled state of position i-1 is stored with
the target token at position i.  At inference the same pooling is applied
causally, over the prefix decoded so far.

File layout (little endian)::

    b"KPAT" | u32 version | u32 dim | u64 count | 32-byte model checksum
    | float32 keys (count x dim) | u32 values (count)
    | JSON trailer | u64 trailer offset
"""
import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from . import lexicon as lx
from .model import pad_batch
from .nn.tensor import no_grad
from .tokenizer import BOS, EOS

log = logging.getLogger(__name__)

MAGIC = b"KPAT"
VERSION = 1
_HEAD = struct.Struct("<4sIIQ32s")


class DatastoreError(ValueError):
    pass


def _pool_row(d, i):
    # one code path for build and query, so the final keys match bit for bit
    s = d @ d[i]
    w = np.exp(s - s.max())
    return (w / w.sum()) @ d


def pool_keys(states):
    """Look-ahead pooled keys, one per row of ``states`` (O, d)."""
    d = np.ascontiguousarray(states, dtype=np.float64)
    if d.ndim != 2 or len(d) == 0:
        raise DatastoreError("pool_keys expects a non-empty (O, d) matrix")
    return np.stack([_pool_row(d, i) for i in range(len(d))])


def query_key(prefix_states):
    """Causal pooled key for the last row of ``prefix_states`` (t, d)."""
    d = np.ascontiguousarray(prefix_states, dtype=np.float64)
    if d.ndim != 2 or len(d) == 0:
        raise DatastoreError("query_key expects a non-empty prefix")
    return _pool_row(d, len(d) - 1)


def tokenizer_version(vocab):
    return hashlib.sha256(vocab.to_json().encode("utf-8")).hexdigest()[:16]


@dataclass
class Datastore:
    keys: np.ndarray                 # (N, d) float32
    values: np.ndarray               # (N,) int64
    model_checksum: bytes
    domains: list = field(default_factory=list)   # [[tag, start, end], ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.keys = np.ascontiguousarray(self.keys, dtype=np.float32)
        self.values = np.ascontiguousarray(self.values, dtype=np.int64)
        if self.keys.ndim != 2 or len(self.keys) != len(self.values):
            raise DatastoreError("keys must be (N, d) with N values")
        if not np.isfinite(self.keys).all():
            raise DatastoreError("non-finite datastore key")
        if len(self.model_checksum) != 32:
            raise DatastoreError("model checksum must be 32 bytes")

    @classmethod
    def empty(cls, dim, model_checksum, **meta):
        return cls(np.zeros((0, dim), np.float32), np.zeros(0, np.int64), model_checksum, [], meta)

    def __len__(self):
        return len(self.values)

    @property
    def dim(self):
        return self.keys.shape[1]

    def domain_ranges(self, tag):
        return [(s, e) for t, s, e in self.domains if t == tag]

    def check_model(self, model):
        if model.checksum() != self.model_checksum:
            raise DatastoreError("datastore was built with a different model")
        if model.cfg.d_k != self.dim:
            raise DatastoreError(f"key dim {self.dim} != model d_k {model.cfg.d_k}")

    def checksum(self):
        return hashlib.sha256(self.to_bytes()).digest()

    # -- serialization -------------------------------------------------
    def to_bytes(self):
        trailer = json.dumps({"domains": self.domains, "meta": self.meta}, sort_keys=True).encode("utf-8")
        head = _HEAD.pack(MAGIC, VERSION, self.dim, len(self), self.model_checksum)
        body = self.keys.astype("<f4").tobytes() + self.values.astype("<u4").tobytes()
        offset = len(head) + len(body)
        return head + body + trailer + struct.pack("<Q", offset)

    @classmethod
    def from_bytes(cls, buf):
        if len(buf) < _HEAD.size + 8:
            raise DatastoreError("truncated datastore file")
        magic, version, dim, count, cks = _HEAD.unpack_from(buf, 0)
        if magic != MAGIC:
            raise DatastoreError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DatastoreError(f"unsupported datastore version {version}")
        (offset,) = struct.unpack_from("<Q", buf, len(buf) - 8)
        kbytes = count * dim * 4
        if offset != _HEAD.size + kbytes + count * 4 or offset > len(buf) - 8:
            raise DatastoreError("datastore size does not match its header")
        p = _HEAD.size
        keys = np.frombuffer(buf, "<f4", count * dim, p).reshape(count, dim)
        values = np.frombuffer(buf, "<u4", count, p + kbytes)
        try:
            trailer = json.loads(buf[offset:len(buf) - 8].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DatastoreError(f"unreadable datastore trailer: {e}") from None
        return cls(keys.astype(np.float32), values.astype(np.int64), cks,
                   [list(r) for r in trailer["domains"]], trailer["meta"])

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def _append_range(domains, tag, start, end):
    if domains and domains[-1][0] == tag and domains[-1][2] == start:
        domains[-1][2] = end
    else:
        domains.append([tag, start, end])


def build_datastore(model, utterances, vocab, lexicon, domain_filter=None, strict=False, batch_size=64):
    """Teacher-forced keys for every target position of every utterance.

    Each utterance with target w_1..w_n contributes n+1 entries (EOS is the
    last value); the first is keyed by the BOS-position state.  ``strict``
    drops that first entry and skips utterances with fewer than two states.
    """
    if len(vocab) != model.cfg.text_vocab:
        raise DatastoreError(f"tokenizer size {len(vocab)} != model text vocab {model.cfg.text_vocab}")
    items = [u for u in utterances if domain_filter is None or u.domain == domain_filter]
    keys, values, domains = [], [], []
    n = 0
    was_training = model.training
    model.eval()
    lim = model.cfg.max_len - 1
    try:
        with no_grad():
            for s in range(0, len(items), batch_size):
                chunk = items[s:s + batch_size]
                asr = [vocab.encode(u.asr).ids for u in chunk]
                phones = [lx.phonemize(u.asr, lexicon).ids for u in chunk]
                refs = [vocab.encode(u.ref).ids[:lim] for u in chunk]
                text = model.encode_text(model.wrap(asr))
                phone = model.encode_phones(model.wrap(phones))
                states, _ = model.decode_states(text, phone, pad_batch([[BOS] + r for r in refs]))
                for u, r, st in zip(chunk, refs, states.data):
                    o = len(r) + 1
                    first = 1 if strict else 0
                    if strict and o < 2:
                        continue
                    k = pool_keys(st[:o])[first:]
                    v = (r + [EOS])[first:]
                    keys.append(k.astype(np.float32))
                    values.extend(v)
                    _append_range(domains, u.domain, n, n + len(v))
                    n += len(v)
    finally:
        model.train(was_training)
    meta = {"tokenizer": tokenizer_version(vocab), "strict": bool(strict), "domain_filter": domain_filter}
    if not keys:
        log.warning("datastore is empty")
        return Datastore.empty(model.cfg.d_k, model.checksum(), **meta)
    return Datastore(np.concatenate(keys), np.array(values, np.int64), model.checksum(), domains, meta)


def merge_datastores(a, b):
    """Concatenate two datastores built with the same model."""
    if a.model_checksum != b.model_checksum:
        raise DatastoreError("cannot merge datastores built with different models")
    if len(a) == 0:
        return Datastore(b.keys.copy(), b.values.copy(), b.model_checksum, [list(r) for r in b.domains], dict(b.meta))
    if len(b) == 0:
        return merge_datastores(b, a)
    if a.dim != b.dim:
        raise DatastoreError(f"key dim mismatch {a.dim} != {b.dim}")
    if a.meta.get("tokenizer") != b.meta.get("tokenizer"):
        raise DatastoreError("cannot merge datastores built with different tokenizers")
    domains = [list(r) for r in a.domains]
    for tag, s, e in b.domains:
        _append_range(domains, tag, s + len(a), e + len(a))
    meta = dict(a.meta)
    meta["merged"] = [a.meta.get("domain_filter"), b.meta.get("domain_filter")]
    return Datastore(np.concatenate([a.keys, b.keys]), np.concatenate([a.values, b.values]),
                     a.model_checksum, domains, meta)
