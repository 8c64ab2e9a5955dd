import json
import os

import pytest
from hypothesis import given, settings, strategies as st

from kpat.errorsim import Slot, Utterance
from kpat.metrics import (BINS, EvalError, EvalReport, bin_label, bin_of, compare_report, corpus_wer, evaluate,
                          frequency_bins, slot_metrics, slot_scores, train_frequencies, wer, werr, word_edits)

import oracles

HERE = os.path.dirname(__file__)
EXPECTED = json.load(open(os.path.join(HERE, "fixtures", "expected.json")))


def utt(marked, asr=None, domain="d"):
    """Utterance from 'text with [slot] text'."""
    a, b = marked.index("["), marked.index("]")
    ref = marked.replace("[", "").replace("]", "")
    return Utterance(ref, asr or ref, [Slot(a, b - 1, domain)], "test", 1, domain)


def load_slot_fixtures():
    rows = []
    with open(os.path.join(HERE, "fixtures", "slot_scoring.tsv"), encoding="utf-8") as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            ref, hyp, hits, words, exact = line.rstrip("\n").split("\t")
            rows.append((utt(ref), hyp, int(hits), int(words), bool(int(exact))))
    return rows


SLOT_FIXTURES = load_slot_fixtures()


def test_wer_identical_is_zero():
    assert wer("a b c", "a b c") == 0.0


def test_wer_one_substitution():
    assert wer("a b c d", "a x c d") == 0.25


def test_wer_empty_hypothesis_is_one():
    assert wer("a b c", "") == 1.0


def test_wer_can_exceed_one():
    assert wer("a", "b c d") == 3.0


def test_wer_empty_reference_raises():
    with pytest.raises(EvalError):
        wer("", "a")


@pytest.mark.parametrize("i", range(0, 50, 5))
def test_word_edits_vs_frozen_oracle(i):
    p = EXPECTED["wer_pairs"][i]
    assert word_edits(p["ref"], p["hyp"]) == p["edits"]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=8), st.lists(st.sampled_from("abcd"), max_size=8))
def test_word_edits_vs_live_oracle(r, h):
    assert word_edits(r, h) == oracles.levenshtein(r, h)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=6), st.lists(st.sampled_from("abc"), max_size=6),
       st.lists(st.sampled_from("abc"), min_size=1, max_size=4))
def test_shared_suffix_never_adds_edits(r, h, s):
    assert word_edits(r + s, h + s) <= word_edits(r, h)


def test_corpus_wer_pools_words():
    assert corpus_wer(["a b c d", "e"], ["a b c d", "x"]) == pytest.approx(1 / 5)


def test_corpus_wer_length_mismatch():
    with pytest.raises(EvalError):
        corpus_wer(["a"], [])


@pytest.mark.parametrize("case", SLOT_FIXTURES, ids=lambda c: f"{c[0].ref}|{c[1]}" if isinstance(c, tuple) else "")
def test_slot_scoring_hand_fixtures(case):
    u, hyp, hits, words, exact = case
    assert slot_scores(u, hyp) == (hits, words, exact)


def test_slot_fixture_totals():
    recall, acc = slot_metrics([c[0] for c in SLOT_FIXTURES], [c[1] for c in SLOT_FIXTURES])
    assert recall == pytest.approx(0.8)
    assert acc == pytest.approx(0.6)


def test_stop_word_only_slot_uses_raw_words():
    u = utt("play [the who]")
    assert slot_scores(u, "play the who") == (2, 2, True)
    assert slot_scores(utt("go to [the]"), "go to the") == (1, 1, True)


def test_bins_and_boundaries():
    assert [bin_of(f) for f in (0, 1, 10, 11, 50, 51, 200, 201, 10**6)] == [0, 1, 1, 2, 2, 3, 3, 4, 4]
    assert [bin_label(i) for i in range(len(BINS))] == ["oov", "1-10", "11-50", "51-200", "201+"]
    with pytest.raises(EvalError):
        bin_of(-1)


def test_train_frequencies_count_by_domain_and_text():
    train = [utt("fly to [boston]", domain="a")] * 3 + [utt("i live in [boston]", domain="b")]
    freq = train_frequencies(train)
    assert freq[("a", "boston")] == 3 and freq[("b", "boston")] == 1


def test_frequency_bins():
    train = [utt("to [paris]")] * 12 + [utt("to [rome]")]
    test = [utt("to [paris]"), utt("to [rome]"), utt("to [oslo]")]
    rows = frequency_bins(train_frequencies(train), test, {"x": ["to paris", "to rome", "to oslow"]})
    by = {r["bin"]: r for r in rows}
    assert by["11-50"]["n"] == 1 and by["1-10"]["n"] == 1 and by["oov"]["n"] == 1
    assert by["oov"]["acc_x"] == 0.0 and by["1-10"]["acc_x"] == 1.0
    assert by["201+"]["n"] == 0 and by["201+"]["acc_x"] is None


def test_werr_reported_pairs():
    assert werr(10.7, 9.9) == pytest.approx(7.5, abs=0.1)
    assert werr(34.7, 31.3) == pytest.approx(9.8, abs=0.1)


def test_werr_zero_baseline_raises():
    with pytest.raises(EvalError):
        werr(0.0, 0.1)


def test_evaluate_and_compare():
    test = [utt("to [paris]"), utt("i live in [new york]")]
    base = evaluate(test, ["to pairs", "i live in new work"])
    cand = evaluate(test, ["to paris", "i live in new york"])
    assert cand.wer == 0.0 and cand.slot_accuracy == 1.0
    assert base.wer == pytest.approx(2 / 7)
    out = compare_report(base, cand)
    assert out["werr"] == pytest.approx(100.0)
    assert cand.werr == pytest.approx(100.0) and cand.baseline == "baseline"


def test_compare_rejects_different_test_sets():
    a = evaluate([utt("to [paris]")], ["to paris"])
    b = evaluate([utt("to [rome]")], ["to rome"])
    with pytest.raises(EvalError):
        compare_report(a, b)


def test_report_round_trip_and_tsv():
    test = [utt("to [paris]"), utt("to [oslo]")]
    freq = train_frequencies([utt("to [paris]")])
    rep = evaluate(test, ["to paris", "to oslo"], freq=freq, systems={"pat": ["to paris", "to oso"]}, name="kpat")
    back = EvalReport.from_json(rep.to_json())
    assert back == rep
    lines = rep.to_tsv().splitlines()
    assert lines[0] == "bin\tn\twer_pat\twer_kpat\tacc_pat\tacc_kpat"
    assert len(lines) == 1 + len(BINS)


def test_report_rejects_bad_rates():
    with pytest.raises(EvalError):
        EvalReport(wer=0.1, slot_recall=1.5)


def test_evaluate_length_mismatch():
    with pytest.raises(EvalError):
        evaluate([utt("to [paris]")], [])
