import json
import os

import numpy as np
import pytest

from kpat.ann import exact_search
from kpat.datastore import (Datastore, DatastoreError, build_datastore, merge_datastores, pool_keys,
                            query_key)
from kpat.tokenizer import EOS

import oracles

EXPECTED = json.load(open(os.path.join(os.path.dirname(__file__), "fixtures", "expected.json")))


def test_identical_rows_pool_to_that_row():
    v = np.array([0.3, -1.2, 2.0])
    assert np.allclose(pool_keys(np.tile(v, (5, 1))), v)


def test_identity_matrix_example():
    keys = pool_keys(np.eye(2))
    assert np.allclose(keys[0], [0.731, 0.269], atol=1e-3)
    assert np.allclose(keys, EXPECTED["pooling_identity"], atol=1e-12)


@pytest.mark.parametrize("i", range(0, 100, 9))
def test_pool_keys_vs_frozen_oracle(i):
    case = EXPECTED["pooling"][i]
    assert np.allclose(pool_keys(np.array(case["D"])), case["keys"], atol=1e-5)
    assert np.allclose(query_key(np.array(case["D"])), case["causal_last"], atol=1e-5)


def test_single_row_query_is_that_row():
    row = np.array([[1.5, -0.5, 2.0]])
    assert np.array_equal(query_key(row), row[0])


def test_causal_vs_lookahead():
    rng = np.random.default_rng(0)
    d = rng.normal(size=(6, 4))
    build = pool_keys(d)
    causal = np.array([query_key(d[:i + 1]) for i in range(6)])
    assert np.abs(build[:-1] - causal[:-1]).max() > 1e-3
    assert np.allclose(build[-1], causal[-1], atol=1e-12)
    # the oracle agrees on the prefix keys too
    assert np.allclose(causal[2], oracles.causal_key(d[:3].tolist()), atol=1e-12)


def test_keys_within_row_envelope():
    rng = np.random.default_rng(1)
    d = rng.normal(size=(7, 5)) * 3
    k = pool_keys(d)
    assert (k >= d.min(axis=0) - 1e-12).all() and (k <= d.max(axis=0) + 1e-12).all()


def test_one_utterance_entry_count(tiny_model, tiny_vocab, lexicon, tiny_corpus):
    u = tiny_corpus["train"][0]
    store = build_datastore(tiny_model, [u], tiny_vocab, lexicon)
    target = tiny_vocab.encode(u.ref).ids
    assert len(store) == len(target) + 1
    assert store.values.tolist() == target + [EOS]
    strict = build_datastore(tiny_model, [u], tiny_vocab, lexicon, strict=True)
    assert strict.values.tolist() == target[1:] + [EOS]
    assert np.array_equal(strict.keys, store.keys[1:])


def test_entry_count_sums_over_corpus(tiny_model, tiny_vocab, lexicon, tiny_corpus):
    train = tiny_corpus["train"]
    store = build_datastore(tiny_model, train, tiny_vocab, lexicon, batch_size=7)
    assert len(store) == sum(len(tiny_vocab.encode(u.ref).ids) + 1 for u in train)
    assert store.meta["tokenizer"] and store.model_checksum == tiny_model.checksum()
    assert sum(e - s for _, s, e in store.domains) == len(store)


def test_batching_does_not_change_keys(tiny_model, tiny_vocab, lexicon, tiny_corpus):
    train = tiny_corpus["train"][:10]
    a = build_datastore(tiny_model, train, tiny_vocab, lexicon, batch_size=1)
    b = build_datastore(tiny_model, train, tiny_vocab, lexicon, batch_size=10)
    assert np.allclose(a.keys, b.keys, atol=1e-5)
    assert np.array_equal(a.values, b.values)


def test_domain_filter(tiny_model, tiny_vocab, lexicon, tiny_corpus):
    store = build_datastore(tiny_model, tiny_corpus["train"], tiny_vocab, lexicon, domain_filter="airports")
    assert {t for t, _, _ in store.domains} == {"airports"}
    n = sum(len(tiny_vocab.encode(u.ref).ids) + 1 for u in tiny_corpus["train"] if u.domain == "airports")
    assert len(store) == n


def test_rebuild_is_byte_identical(tiny_model, tiny_vocab, lexicon, tiny_corpus, tmp_path):
    paths = []
    for i in range(2):
        store = build_datastore(tiny_model, tiny_corpus["train"], tiny_vocab, lexicon)
        p = tmp_path / f"d{i}.kpat"
        store.save(p)
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]


def test_file_round_trip_and_layout(tiny_model, tiny_vocab, lexicon, tiny_corpus, tmp_path):
    store = build_datastore(tiny_model, tiny_corpus["train"][:5], tiny_vocab, lexicon)
    p = tmp_path / "d.kpat"
    store.save(p)
    buf = p.read_bytes()
    assert buf[:4] == b"KPAT"
    again = Datastore.load(p)
    assert np.array_equal(again.keys, store.keys) and np.array_equal(again.values, store.values)
    assert again.domains == store.domains and again.meta == store.meta
    assert again.model_checksum == store.model_checksum


def test_corrupt_file_rejected(tmp_path):
    store = Datastore(np.ones((3, 4)), [5, 6, 7], bytes(32))
    buf = bytearray(store.to_bytes())
    with pytest.raises(DatastoreError):
        Datastore.from_bytes(b"XXXX" + bytes(buf[4:]))
    with pytest.raises(DatastoreError):
        Datastore.from_bytes(bytes(buf[:-12]) + bytes(buf[-8:]))


def test_non_finite_key_rejected():
    with pytest.raises(DatastoreError):
        Datastore(np.array([[np.nan, 0.0]]), [4], bytes(32))


def test_model_mismatch_refused(tiny_model, tiny_vocab, lexicon, tiny_corpus):
    store = build_datastore(tiny_model, tiny_corpus["train"][:2], tiny_vocab, lexicon)
    from kpat.model import PAT
    other = PAT(tiny_model.cfg.__class__(**{**tiny_model.cfg.__dict__, "seed": 99}))
    with pytest.raises(DatastoreError):
        store.check_model(other)
    store.check_model(tiny_model)


def test_tokenizer_mismatch_refused(tiny_model, lexicon, tiny_corpus):
    from kpat.tokenizer import train_bpe
    with pytest.raises(DatastoreError):
        build_datastore(tiny_model, tiny_corpus["train"], train_bpe(["abc"], 10), lexicon)


def _store(rng, n, tag, cks=bytes(32)):
    return Datastore(rng.normal(size=(n, 4)), rng.integers(4, 50, n), cks, [[tag, 0, n]], {"tokenizer": "t"})


def test_merge_identity_and_counts():
    rng = np.random.default_rng(2)
    x = _store(rng, 10, "airports")
    empty = Datastore.empty(4, bytes(32), tokenizer="t")
    m = merge_datastores(empty, x)
    assert np.array_equal(m.keys, x.keys) and m.domains == x.domains
    y = _store(rng, 7, "full_names")
    xy = merge_datastores(x, y)
    assert len(xy) == 17
    assert xy.domains == [["airports", 0, 10], ["full_names", 10, 17]]


def test_merge_checksum_mismatch_refused():
    rng = np.random.default_rng(3)
    with pytest.raises(DatastoreError):
        merge_datastores(_store(rng, 3, "a"), _store(rng, 3, "a", bytes([1]) * 32))


def test_search_over_merged_equals_union_oracle():
    rng = np.random.default_rng(4)
    a, b = _store(rng, 40, "a"), _store(rng, 25, "b")
    m = merge_datastores(a, b)
    union = np.concatenate([a.keys, b.keys]).tolist()
    for q in rng.normal(size=(10, 4)):
        got = exact_search(m, q, 5)
        want = oracles.knn_double_loop(union, q.astype(np.float32).tolist(), 5)
        assert got.ids.tolist() == [i for i, _ in want]


def test_self_retrieval_distance_zero(tiny_model, tiny_vocab, lexicon, tiny_corpus):
    store = build_datastore(tiny_model, tiny_corpus["train"][:8], tiny_vocab, lexicon)
    for i in range(0, len(store), 7):
        nb = exact_search(store, store.keys[i], 1)
        assert nb.distances[0] == 0.0
