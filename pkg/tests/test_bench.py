import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kl2bias.bench import (
    DatasetManifest,
    SyntheticSpec,
    evaluate,
    read_manifest,
    synth_dataset,
    synth_segments,
)
from kl2bias.clustering import agglomerate, cut_k, pairwise_distances
from kl2bias.exceptions import IdMismatch


def test_two_speakers_one_segment(tmp_path):
    m = synth_dataset(SyntheticSpec(2, 13, 1, (20, 40), 1.0, seed=0), tmp_path)
    assert len(m.entries) == 2
    assert len({e.label for e in m.entries}) == 2
    assert len(list(tmp_path.glob("spk*.csv"))) == 2
    back = read_manifest(tmp_path / "manifest.csv")
    assert back.entries == m.entries
    segs = back.load_segments()
    assert [s.rows for s in segs] == [e.frames for e in m.entries]


def test_deterministic_bytes(tmp_path):
    spec = SyntheticSpec(3, 13, 2, (20, 60), 1.0, seed=4)
    synth_dataset(spec, tmp_path / "a")
    synth_dataset(spec, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), lo=st.integers(15, 50), span=st.integers(0, 200),
       scale=st.sampled_from(["uniform", "log-uniform"]))
def test_lengths_within_range(seed, lo, span, scale):
    spec = SyntheticSpec(2, 13, 3, (lo, lo + span), 1.0, seed=seed, length_scale=scale)
    for seg, _ in synth_segments(spec):
        assert lo <= seg.rows <= lo + span


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(num_speakers=1)
    with pytest.raises(ValueError):
        SyntheticSpec(length_range=(10, 100))
    with pytest.raises(ValueError):
        SyntheticSpec(speaker_separation=0)


def test_well_separated_long_segments_recovered():
    hits = 0
    for seed in range(20):
        spec = SyntheticSpec(3, 13, 3, (1000, 1000), 8.0, seed=seed)
        segs = synth_segments(spec)
        truth = {s.segment_id: lab for s, lab in segs}
        tree = agglomerate(pairwise_distances([s for s, _ in segs]))
        hits += evaluate(cut_k(tree, 3), truth).pairwise_f1 == 1.0
    assert hits >= 19


def test_evaluate_perfect():
    truth = {"a": "s1", "b": "s1", "c": "s2"}
    score = evaluate({"a": 5, "b": 5, "c": 2}, truth)
    assert (score.pairwise_precision, score.pairwise_recall, score.pairwise_f1, score.purity) == (1, 1, 1, 1)


def test_evaluate_singletons():
    truth = {"a": "s1", "b": "s1", "c": "s2"}
    score = evaluate({"a": 0, "b": 1, "c": 2}, truth)
    assert score.pairwise_precision == 1.0
    assert score.pairwise_recall == 0.0
    assert score.pairwise_f1 == 0.0


def test_evaluate_hand_count():
    truth = {"a": "s1", "b": "s1", "c": "s2", "d": "s2"}
    score = evaluate({"a": 0, "c": 0, "b": 1, "d": 1}, truth)
    assert score.pairwise_precision == 0.0
    assert score.pairwise_recall == 0.0
    assert score.purity == 0.5


def test_evaluate_id_mismatch():
    with pytest.raises(IdMismatch):
        evaluate({"a": 0}, {"a": "s1", "b": "s2"})


def test_evaluate_accepts_manifest(tmp_path):
    m = synth_dataset(SyntheticSpec(2, 13, 2, (20, 30), 1.0, seed=1), tmp_path)
    assign = {e.segment_id: int(e.label[-1]) for e in m.entries}
    assert evaluate(assign, m).pairwise_f1 == 1.0
    assert isinstance(m, DatasetManifest)


@settings(max_examples=50, deadline=None)
@given(
    labels=st.lists(st.integers(0, 3), min_size=2, max_size=12),
    pred=st.data(),
)
def test_evaluate_invariants(labels, pred):
    ids = [f"x{i}" for i in range(len(labels))]
    predicted = pred.draw(st.lists(st.integers(0, 4), min_size=len(ids), max_size=len(ids)))
    truth = dict(zip(ids, (f"s{l}" for l in labels)))
    assign = dict(zip(ids, predicted))
    score = evaluate(assign, truth)
    relabeled = evaluate({k: 10 - v for k, v in assign.items()}, {k: v + "_" for k, v in truth.items()})
    assert score == relabeled
    p, r = score.pairwise_precision, score.pairwise_recall
    expected_f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    assert score.pairwise_f1 == pytest.approx(expected_f1)
    assert score.purity >= 1 / len(set(labels)) - 1e-12
    pure = all(len({truth[k] for k in ids if assign[k] == c}) == 1 for c in set(predicted))
    assert (score.purity == 1.0) == pure
