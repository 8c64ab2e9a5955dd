import json
import logging
import math

import numpy as np
import pytest

from kpat import lexicon as lx
from kpat.ann import ExactIndex, NeighborSet, build_index
from kpat.datastore import Datastore, build_datastore
from kpat.knn import InterpolationParams, decode_kpat, interpolate, knn_distribution, write_trace
from kpat.model import PAT, PatConfig, greedy_decode
from kpat.train import Trainer, TrainConfig, make_examples


def nb(values, distances):
    return NeighborSet(np.arange(len(values)), np.array(values), np.array(distances, np.float64))


def test_distribution_two_neighbours_ln2():
    p = knn_distribution(nb([0, 1], [0.0, math.log(2)]), 1.0, 3)
    assert np.allclose(p, [2 / 3, 1 / 3, 0.0])


def test_distribution_temperature_scales_distance():
    p = knn_distribution(nb([0, 1], [0.0, 5 * math.log(2)]), 5.0, 2)
    assert np.allclose(p, [2 / 3, 1 / 3])


def test_distribution_shared_value_accumulates():
    p = knn_distribution(nb([4, 4, 2], [1.0, 1.0, 1.0]), 1.0, 5)
    assert np.allclose(p, [0, 0, 1 / 3, 0, 2 / 3])


def test_distribution_far_neighbours_stay_finite():
    p = knn_distribution(nb([0, 1], [1e4, 1e4 + 1]), 1.0, 2)
    assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)


def test_distribution_empty_raises():
    with pytest.raises(ValueError):
        knn_distribution(nb([], []), 1.0, 3)


def test_interpolation_example():
    assert np.allclose(interpolate([0.8, 0.2], [0.0, 1.0], 0.5), [0.4, 0.6])


def test_interpolation_endpoints_are_exact():
    p, q = np.array([0.3, 0.7]), np.array([0.9, 0.1])
    assert np.array_equal(interpolate(p, q, 0.0), p)
    assert np.array_equal(interpolate(p, q, 1.0), q)


def test_interpolation_rejects_bad_lambda():
    with pytest.raises(ValueError):
        interpolate([1.0], [1.0], 1.5)


@pytest.mark.parametrize("kw", [{"lam": -0.1}, {"k": 0}, {"temperature": 0.0}, {"nprobe": 0}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        InterpolationParams(**kw)


@pytest.fixture(scope="module")
def trained(tiny_corpus, tiny_vocab, lexicon):
    cfg = PatConfig(n_enc_layers=1, n_dec_layers=1, d_k=32, n_heads=2, d_ff=64,
                    text_vocab=len(tiny_vocab), max_len=40, seed=5)
    m = PAT(cfg)
    Trainer(m, TrainConfig(batch_size=8, warmup=50)).fit(make_examples(tiny_corpus["train"], tiny_vocab, lexicon), 30)
    m.eval()
    return m


def inputs(utts, vocab, lexicon):
    return [vocab.encode(u.asr).ids for u in utts], [lx.phonemize(u.asr, lexicon).ids for u in utts]


def test_lambda_zero_equals_greedy(tiny_model, tiny_corpus, tiny_vocab, lexicon):
    ds = build_datastore(tiny_model, tiny_corpus["train"], tiny_vocab, lexicon)
    a, p = inputs(tiny_corpus["test"], tiny_vocab, lexicon)
    out = decode_kpat(tiny_model, ds, ExactIndex(ds), a, p, InterpolationParams(lam=0.0))
    assert [s.ids for s in out] == [s.ids for s in greedy_decode(tiny_model, a, p)]


def test_lambda_one_single_utterance_memorised(trained, tiny_corpus, tiny_vocab, lexicon):
    for u in tiny_corpus["test"][:6]:
        ds = build_datastore(trained, [u], tiny_vocab, lexicon)
        a, p = inputs([u], tiny_vocab, lexicon)
        out = decode_kpat(trained, ds, ExactIndex(ds), a, p, InterpolationParams(lam=1.0))
        assert out[0].ids == tiny_vocab.encode(u.ref).ids


def test_ivf_full_probe_equals_exact(trained, tiny_corpus, tiny_vocab, lexicon):
    ds = build_datastore(trained, tiny_corpus["train"], tiny_vocab, lexicon)
    idx = build_index(ds, n_centroids=8, seed=0)
    a, p = inputs(tiny_corpus["test"], tiny_vocab, lexicon)
    params = InterpolationParams(nprobe=8)
    ivf = decode_kpat(trained, ds, idx, a, p, params)
    flat = decode_kpat(trained, ds, ExactIndex(ds), a, p, params)
    assert [s.ids for s in ivf] == [s.ids for s in flat]


def test_empty_datastore_falls_back_with_warning(tiny_model, tiny_corpus, tiny_vocab, lexicon, caplog):
    ds = Datastore.empty(tiny_model.cfg.d_k, tiny_model.checksum())
    a, p = inputs(tiny_corpus["test"][:3], tiny_vocab, lexicon)
    with caplog.at_level(logging.WARNING):
        out = decode_kpat(tiny_model, ds, ExactIndex(ds), a, p, InterpolationParams())
    assert "empty datastore" in caplog.text
    assert [s.ids for s in out] == [s.ids for s in greedy_decode(tiny_model, a, p)]


def test_datastore_from_other_model_rejected(tiny_model, trained, tiny_corpus, tiny_vocab, lexicon):
    ds = build_datastore(trained, tiny_corpus["train"][:3], tiny_vocab, lexicon)
    a, p = inputs(tiny_corpus["test"][:1], tiny_vocab, lexicon)
    with pytest.raises(ValueError):
        decode_kpat(tiny_model, ds, ExactIndex(ds), a, p, InterpolationParams())


def test_trace_records(trained, tiny_corpus, tiny_vocab, lexicon, tmp_path):
    ds = build_datastore(trained, tiny_corpus["train"], tiny_vocab, lexicon)
    a, p = inputs(tiny_corpus["test"][:2], tiny_vocab, lexicon)
    trace = []
    out = decode_kpat(trained, ds, ExactIndex(ds), a, p, InterpolationParams(k=4), trace=trace)
    assert len(trace) == 2
    for rec, seq in zip(trace, out):
        assert rec["output"] == seq.ids
        assert len(rec["per_step"]) == len(seq.ids) + 1
        for st in rec["per_step"]:
            assert len(st["knn_values"]) == len(st["knn_distances"]) == 4
            assert st["knn_distances"] == sorted(st["knn_distances"])
            assert st["lambda_used"] == 0.5
            assert len(st["p_pat_top5"]) == 5
        assert [s["token"] for s in rec["per_step"][:-1]] == seq.ids
    path = tmp_path / "t.jsonl"
    write_trace(path, trace, tiny_vocab)
    rows = [json.loads(line) for line in open(path)]
    assert rows[0]["output_text"] == tiny_vocab.decode(out[0].ids)
