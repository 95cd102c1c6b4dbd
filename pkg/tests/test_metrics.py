import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psgan.data.synth import SynthSpec, synthetic_samples
from psgan.generator import GeneratorConfig
from psgan.metrics import (
    DETAIL_HEADER,
    MetricsReport,
    RegionResult,
    aggregate,
    char_error_rate,
    edit_distance,
    evaluate,
    replacement_texts,
    training_proxy,
    word_accuracy,
    word_error_rate,
)
from psgan.recognition import OracleRecognizer
from psgan.training import TrainConfig, Trainer

words = st.text(alphabet="abcxyz ", max_size=8)


@pytest.fixture(scope="module")
def samples():
    return synthetic_samples(SynthSpec(seed=4), 6)


@pytest.fixture(scope="module")
def untrained_ckpt(samples):
    gen = GeneratorConfig(base_channels=4, n_resblocks=1)
    return Trainer(samples, gen, TrainConfig(steps=0)).checkpoint()


# --- string metrics -------------------------------------------------------------------

@pytest.mark.parametrize("pred,truth,expected", [
    ("hello", "hello", 1), ("Hello", "hello", 1), ("helo", "hello", 0), ("", "a", 0),
])
def test_word_accuracy(pred, truth, expected):
    assert word_accuracy(pred, truth) == expected


@pytest.mark.parametrize("a,b,d", [
    ("", "abc", 3), ("abc", "", 3), ("kitten", "sitting", 3), ("flaw", "lawn", 2), ("same", "same", 0),
])
def test_edit_distance_examples(a, b, d):
    assert edit_distance(a, b) == d


@settings(max_examples=200, deadline=None)
@given(words, words, words)
def test_edit_distance_is_a_metric(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert (edit_distance(a, b) == 0) == (a == b)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
    assert abs(len(a) - len(b)) <= edit_distance(a, b) <= max(len(a), len(b))


def test_char_error_rate_examples():
    assert char_error_rate("hello", "hello") == 0.0
    assert char_error_rate("helo", "hello") == pytest.approx(0.2)
    assert char_error_rate("", "hello") == 1.0
    with pytest.raises(ValueError):
        char_error_rate("x", "")


@settings(max_examples=200, deadline=None)
@given(words, words.filter(bool))
def test_char_error_rate_bounds(pred, truth):
    cer = char_error_rate(pred, truth)
    assert 0.0 <= cer <= max(len(pred), len(truth)) / len(truth)
    assert (cer == 0.0) == (pred == truth)


def test_word_error_rate_counts_tokens():
    assert word_error_rate("the cat sat", "the cat sat") == 0.0
    assert word_error_rate("the bat sat", "the cat sat") == pytest.approx(1 / 3)
    assert word_error_rate("", "two words") == 1.0
    with pytest.raises(ValueError):
        word_error_rate("x", "  ")


# --- aggregation ----------------------------------------------------------------------

def r(image, idx, truth, pred):
    return RegionResult(image, idx, truth, pred)


def test_aggregate_hand_computed_example():
    rep = aggregate({"A": [r("A", 0, "ab", "ab"), r("A", 1, "cd", "xx")], "B": [r("B", 0, "ef", "ef")]})
    assert rep.accuracy == pytest.approx(2 / 3)
    assert rep.per_image_accuracy == pytest.approx(0.75)
    assert rep.cer == pytest.approx(1 / 3)
    assert rep.per_image_cer == pytest.approx(0.25)
    assert (rep.n_regions, rep.n_images) == (3, 2)


def test_aggregate_groups_a_flat_iterable_by_image():
    flat = [r("A", 0, "ab", "ab"), r("B", 0, "ef", "ef"), r("A", 1, "cd", "xx")]
    assert aggregate(flat) == aggregate({"A": [flat[0], flat[2]], "B": [flat[1]]})


def test_single_image_and_all_correct():
    rep = aggregate([r("A", i, t, t.upper()) for i, t in enumerate(["abc", "de", "f"])])
    assert rep.accuracy == rep.per_image_accuracy == 1.0
    assert rep.wer == rep.per_image_wer == rep.cer == rep.per_image_cer == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.randoms(use_true_random=False))
def test_equal_region_counts_make_both_aggregations_coincide(n_images, per_image, rnd):
    res = {str(i): [r(str(i), j, "abc", rnd.choice(["abc", "abd", "", "xbcq"])) for j in range(per_image)]
           for i in range(n_images)}
    rep = aggregate(res)
    assert rep.accuracy == pytest.approx(rep.per_image_accuracy)
    assert rep.cer == pytest.approx(rep.per_image_cer)
    assert rep.wer == pytest.approx(rep.per_image_wer)


def test_aggregate_rejects_empty_input():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError, match="without regions"):
        aggregate({"A": [r("A", 0, "a", "a")], "B": []})


def test_report_records_round_trip_and_table(tmp_path):
    rep = aggregate({"A": [r("A", 0, "ab", "ab"), r("A", 1, "cd", "xx")], "B": [r("B", 0, "ef", "ef")]})
    path = rep.write(tmp_path / "m.jsonl")
    assert MetricsReport.read(path) == rep
    assert all("metric" in json.loads(line) for line in path.read_text().splitlines())
    table = rep.table()
    assert "per image" in table and "0.7500" in table and "3 regions in 2 images" in table


# --- evaluation -----------------------------------------------------------------------------

def test_evaluate_on_targets_with_oracle_is_exact(samples, tmp_path):
    detail = tmp_path / "d.csv"
    rep = evaluate(samples, None, OracleRecognizer(), on_targets=True, detail_path=detail)
    assert rep.accuracy == 1.0 and rep.per_image_accuracy == 1.0 and rep.cer == 0.0
    lines = detail.read_text().splitlines()
    assert lines[0] == DETAIL_HEADER
    assert len(lines) == 1 + rep.n_regions == 1 + sum(len(s.masks) for s in samples)
    image_id, idx, truth, pred, acc, cer = lines[1].split(",")
    assert truth == pred == samples[0].transcripts[0] and acc == "1" and float(cer) == 0.0


def test_evaluate_scores_against_replacement_strings(samples, untrained_ckpt):
    rep, results = evaluate(samples, untrained_ckpt, OracleRecognizer(), seed=3, return_results=True)
    texts = replacement_texts(samples, seed=3)
    assert [res.truth for res in results] == [t for ts in texts for t in ts]
    assert all(len(a) == len(b) for a, b in zip(texts, (s.transcripts for s in samples)))
    again = evaluate(samples, untrained_ckpt, OracleRecognizer(), seed=3)
    assert again == rep


def test_replacement_texts_keep_lengths_and_depend_on_seed(samples):
    a, b = replacement_texts(samples, 0), replacement_texts(samples, 1)
    assert [[len(t) for t in ts] for ts in a] == [[len(t) for t in s.transcripts] for s in samples]
    assert a == replacement_texts(samples, 0) and a != b


def test_recognizer_failure_scores_as_empty(samples, caplog):
    def broken(image, mask):
        raise RuntimeError("boom")

    with caplog.at_level(logging.WARNING, logger="psgan.metrics"):
        rep, results = evaluate(samples[:2], None, broken, on_targets=True, return_results=True)
    assert all(res.pred == "" for res in results)
    assert rep.accuracy == 0.0 and rep.cer == 1.0
    assert "boom" in caplog.text


# --- training proxy -------------------------------------------------------------------------------

def test_training_proxy_with_zero_fraction_is_a_no_op(samples):
    heldout = synthetic_samples(SynthSpec(seed=5), 4)
    res = training_proxy(samples, heldout, None, synthetic_fraction=0.0)
    assert res.n_synthetic_images == 0
    assert res.error_before == res.error_after and res.accuracy_before == res.accuracy_after


def test_training_proxy_is_reproducible_and_counts_synthetic(samples, untrained_ckpt):
    heldout = synthetic_samples(SynthSpec(seed=5), 4)
    a = training_proxy(samples, heldout, untrained_ckpt, synthetic_fraction=0.5, seed=2)
    b = training_proxy(samples, heldout, untrained_ckpt, synthetic_fraction=0.5, seed=2)
    assert a == b
    assert (a.n_base_images, a.n_synthetic_images) == (6, 3)
    assert 0.0 <= a.error_before and 0.0 <= a.accuracy_after <= 1.0


@pytest.mark.parametrize("fraction", [-0.1, 1.5])
def test_training_proxy_rejects_bad_fraction(samples, fraction):
    with pytest.raises(ValueError, match="fraction"):
        training_proxy(samples, samples, None, synthetic_fraction=fraction)
