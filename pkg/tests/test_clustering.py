import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from kl2bias.calibration import SimulationConfig, simulate_surface
from kl2bias.clustering import (
    Dendrogram,
    DistanceMatrix,
    agglomerate,
    apply_correction,
    cut,
    cut_k,
    pairwise_distances,
    read_assignment,
    read_distance_matrix,
    write_assignment,
    write_distance_matrix,
)
from kl2bias.exceptions import InvalidK, MetricFailure
from kl2bias.features import FeatureMatrix
from kl2bias.divergence import kl2
from kl2bias.metrics import MetricConfig
from kl2bias.stats import compute_stats


def matrix(values, ids=None):
    values = np.asarray(values, float)
    ids = ids or [chr(ord("A") + i) for i in range(len(values))]
    return DistanceMatrix(tuple(ids), (10,) * len(ids), values)


def random_matrix(rng, n):
    pts = rng.normal(size=(n, 3))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    return matrix(d, [f"s{i:02d}" for i in range(n)])


THREE = [[0, 1, 4], [1, 0, 5], [4, 5, 0]]


def partition(assign):
    groups = {}
    for sid, label in assign.items():
        groups.setdefault(label, set()).add(sid)
    return {frozenset(g) for g in groups.values()}


def test_two_segments():
    t = agglomerate(matrix([[0, 3.7], [3.7, 0]]))
    assert t.merges == ((0, 1, 3.7),)


def test_three_point_average_linkage():
    t = agglomerate(matrix(THREE))
    assert t.merges[0] == (0, 1, 1.0)
    assert t.merges[1] == (2, 3, 4.5) or t.merges[1] == (3, 2, 4.5)
    assert partition(cut(t, 2.0)) == {frozenset("AB"), frozenset("C")}


def test_cut_extremes():
    t = agglomerate(matrix(THREE))
    assert partition(cut(t, 0.5)) == {frozenset("A"), frozenset("B"), frozenset("C")}
    assert partition(cut(t, 10.0)) == {frozenset("ABC")}
    assert set(cut(t, 0.5).values()) == {0, 1, 2}


def test_cut_k():
    t = agglomerate(matrix(THREE))
    assert partition(cut_k(t, 1)) == {frozenset("ABC")}
    assert partition(cut_k(t, 3)) == {frozenset("A"), frozenset("B"), frozenset("C")}
    assert partition(cut_k(t, 2)) == {frozenset("AB"), frozenset("C")}
    with pytest.raises(InvalidK):
        cut_k(t, 0)
    with pytest.raises(InvalidK):
        cut_k(t, 4)


def test_cut_requires_finite():
    with pytest.raises(ValueError):
        cut(agglomerate(matrix(THREE)), np.inf)


def test_heights_monotone_and_match_scipy():
    rng = np.random.default_rng(0)
    for n in (5, 12, 30):
        d = random_matrix(rng, n)
        t = agglomerate(d)
        assert np.all(np.diff(t.heights) >= 0)
        ref = linkage(squareform(d.values, checks=False), method="average")
        np.testing.assert_allclose(t.heights, ref[:, 2], rtol=1e-12)
        for k in (2, 4):
            ours = partition(cut_k(t, k))
            theirs = fcluster(ref, k, criterion="maxclust")
            assert ours == partition(dict(zip(d.ids, theirs)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(3, 15))
def test_permutation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    d = random_matrix(rng, n)
    perm = rng.permutation(n)
    permuted = DistanceMatrix(tuple(d.ids[i] for i in perm), d.lengths, d.values[np.ix_(perm, perm)])
    t1, t2 = agglomerate(d), agglomerate(permuted)
    np.testing.assert_allclose(t1.heights, t2.heights, rtol=1e-12)
    heights = t1.heights
    for thr in (heights[0] / 2, *((heights[:-1] + heights[1:]) / 2), heights[-1] * 2):
        assert partition(cut(t1, thr)) == partition(cut(t2, thr))


def test_tie_breaking_lexicographic():
    t = agglomerate(matrix(np.ones((4, 4)) - np.eye(4), ["d", "c", "b", "a"]))
    first = t.merges[0]
    assert {t.leaves[first[0]], t.leaves[first[1]]} == {"a", "b"}


def test_dendrogram_validation():
    with pytest.raises(ValueError):
        Dendrogram(("a", "b", "c"), ((0, 1, 2.0), (2, 3, 1.0)))
    with pytest.raises(ValueError):
        Dendrogram(("a", "b"), ())


def test_newick_and_json():
    t = agglomerate(matrix(THREE))
    nwk = t.to_newick()
    assert nwk in ("((A:1,B:1):3.5,C:4.5);", "(C:4.5,(A:1,B:1):3.5);")
    doc = json.loads(t.to_json())
    assert doc["height"] == 4.5
    back = Dendrogram.from_dict(doc)
    assert partition(cut(back, 2.0)) == partition(cut(t, 2.0))
    np.testing.assert_array_equal(back.heights, t.heights)


def test_pairwise_identical_segments():
    x = np.random.default_rng(1).normal(size=(40, 13))
    d = pairwise_distances([FeatureMatrix(x, "a"), FeatureMatrix(x, "b")])
    np.testing.assert_allclose(d.values, np.zeros((2, 2)), atol=1e-9)


def test_pairwise_matches_direct_kl2():
    rng = np.random.default_rng(2)
    xs = [rng.normal(size=(n, 13)) * (1 + i) for i, n in enumerate((30, 80, 200))]
    d = pairwise_distances([FeatureMatrix(x, f"s{i}") for i, x in enumerate(xs)])
    for i in range(3):
        for j in range(3):
            if i != j:
                assert d.values[i, j] == kl2(compute_stats(xs[i]), compute_stats(xs[j]))
    assert d.lengths == (30, 80, 200)
    assert d.metric_descriptor == "kl2"


def test_pairwise_parallel_identical():
    rng = np.random.default_rng(3)
    segs = [FeatureMatrix(rng.normal(size=(50 + 10 * i, 13)), f"s{i}") for i in range(6)]
    a = pairwise_distances(segs)
    b = pairwise_distances(segs, jobs=3)
    assert a.values.tobytes() == b.values.tobytes()


def test_pairwise_failure_aborts():
    segs = [FeatureMatrix(np.zeros((1, 13)), "short"), FeatureMatrix(np.ones((20, 13)), "ok")]
    with pytest.raises(MetricFailure, match="short"):
        pairwise_distances(segs)


def test_pairwise_surface_metric_mismatch():
    s = simulate_surface(SimulationConfig("kl2_no_mean", grid_lengths=(20, 40), trials_per_cell=5))
    segs = [FeatureMatrix(np.random.default_rng(i).normal(size=(30, 13)), f"s{i}") for i in range(2)]
    with pytest.raises(ValueError):
        pairwise_distances(segs, MetricConfig("kl2"), s)


def test_correction_reduces_spread():
    rng = np.random.default_rng(4)
    surface = simulate_surface(SimulationConfig("kl2", grid_lengths=(20, 50, 150, 500, 1500), trials_per_cell=100, seed=5))
    lengths = [20, 30, 60, 150, 400, 1000, 1500]
    segs = [FeatureMatrix(rng.normal(size=(n, 13)), f"s{i}") for i, n in enumerate(lengths)]
    raw = pairwise_distances(segs)
    corr = pairwise_distances(segs, surface=surface)
    off = ~np.eye(len(segs), dtype=bool)

    def cv(v):
        return v.std() / v.mean()

    assert cv(corr.values[off]) < cv(raw.values[off])
    again = apply_correction(raw, surface)
    np.testing.assert_allclose(again.values, corr.values, rtol=1e-12)
    assert again.metric_descriptor == corr.metric_descriptor


def test_distance_matrix_file_roundtrip(tmp_path):
    d = DistanceMatrix(("x", "y", "z"), (10, 20, 30), np.array(THREE, float) / 3, "kl2")
    write_distance_matrix(d, tmp_path / "d.csv")
    back = read_distance_matrix(tmp_path / "d.csv")
    assert back.ids == d.ids and back.lengths == d.lengths
    assert back.metric_descriptor == "kl2"
    np.testing.assert_array_equal(back.values, d.values)


def test_assignment_roundtrip(tmp_path):
    a = {"x": 0, "y": 1, "z": 0}
    write_assignment(a, tmp_path / "a.csv")
    assert read_assignment(tmp_path / "a.csv") == a


def test_distance_matrix_invariants():
    with pytest.raises(ValueError):
        matrix([[0, 1], [2, 0]])
    with pytest.raises(ValueError):
        matrix([[1, 1], [1, 0]])
    with pytest.raises(ValueError):
        matrix([[0, -1], [-1, 0]])


@pytest.mark.slow
def test_short_same_speaker_merges_first_after_correction():
    from kl2bias.bench import SyntheticSpec, synth_segments

    surface = simulate_surface(SimulationConfig("kl2", grid_lengths=(20, 30, 50, 100, 300, 1000, 3000),
                                                trials_per_cell=200, seed=1))

    def same_speaker_first(d):
        a, b, _ = agglomerate(d).merges[0]
        return {a, b} == {0, 1}

    raw_failures = corrected_ok = 0
    for seed in range(500):
        segs = synth_segments(SyntheticSpec(2, 13, 2, (3000, 3000), 0.25, seed))
        # rows are iid, so a prefix is a short sample of the same speaker
        trio = [FeatureMatrix(segs[0][0].values[:30], "short"), segs[1][0], segs[2][0]]
        d = pairwise_distances(trio)
        if not same_speaker_first(d):
            raw_failures += 1
            corrected_ok += same_speaker_first(apply_correction(d, surface))
            if raw_failures == 20:
                break
    assert raw_failures == 20
    assert corrected_ok >= 15
