import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from kl2bias.exceptions import InsufficientData, NonFiniteValue, SingularCovariance
from kl2bias.stats import RegularizationPolicy, SegmentStats, compute_stats, precision


def random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def test_hand_example():
    s = compute_stats(np.array([[0, 0], [2, 0], [0, 2], [2, 2]], dtype=float))
    np.testing.assert_allclose(s.mean, [1, 1])
    np.testing.assert_allclose(s.covariance, np.diag([4 / 3, 4 / 3]), atol=1e-15)
    assert s.count == 4
    assert not s.regularized


def test_identical_rows_regularized():
    s = compute_stats(np.ones((2, 3)))
    assert s.regularized
    np.testing.assert_allclose(s.covariance, 1e-6 * np.eye(3))
    np.linalg.cholesky(s.covariance)


def test_short_segment_gets_ridge():
    rng = np.random.default_rng(0)
    s = compute_stats(rng.normal(size=(5, 13)))
    assert s.regularized
    np.linalg.cholesky(s.covariance)
    np.testing.assert_allclose(precision(s) @ s.covariance, np.eye(13), atol=1e-6)


def test_single_row():
    with pytest.raises(InsufficientData):
        compute_stats(np.zeros((1, 13)))


def test_nonfinite():
    x = np.zeros((4, 2))
    x[1, 1] = np.inf
    with pytest.raises(NonFiniteValue):
        compute_stats(x)


def test_policy_validation():
    with pytest.raises(ValueError):
        RegularizationPolicy(epsilon_scale=0)
    with pytest.raises(ValueError):
        RegularizationPolicy(condition_limit=1)


def test_condition_limit_triggers_ridge():
    x = np.array([[0.0, 0.0], [1.0, 1e-4], [2.0, -1e-4], [3.0, 0.0]])
    assert not compute_stats(x).regularized
    assert compute_stats(x, RegularizationPolicy(condition_limit=1e3)).regularized


def test_precision_identity_and_diagonal():
    s = SegmentStats(np.zeros(4), np.eye(4), 10)
    np.testing.assert_array_equal(precision(s), np.eye(4))
    s = SegmentStats(np.zeros(2), np.diag([2.0, 4.0]), 10)
    np.testing.assert_allclose(precision(s), np.diag([0.5, 0.25]))


def test_precision_multiply_back():
    rng = np.random.default_rng(11)
    for d in (1, 3, 13):
        cov = random_spd(rng, d)
        s = SegmentStats(np.zeros(d), cov, 50)
        np.testing.assert_allclose(cov @ precision(s), np.eye(d), atol=1e-8)


def test_precision_singular():
    s = SegmentStats(np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]), 10)
    with pytest.raises(SingularCovariance):
        precision(s)


def test_stats_rejects_asymmetric():
    with pytest.raises(ValueError):
        SegmentStats(np.zeros(2), np.array([[1.0, 0.1], [0.0, 1.0]]), 10)


def test_regularization_rate_at_twice_dim():
    d = 13
    rng = np.random.default_rng(123)
    cov = random_spd(rng, d)
    chol = np.linalg.cholesky(cov)
    fired = sum(
        compute_stats(rng.standard_normal((2 * d, d)) @ chol.T + 3.0).regularized for _ in range(1000)
    )
    assert fired / 1000 < 0.01


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 6), n=st.integers(10, 60))
def test_affine_equivariance(seed, d, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    lin = rng.normal(size=(d, d)) + 2 * np.eye(d)
    shift = rng.normal(size=d) * 5
    s = compute_stats(x)
    t = compute_stats(x @ lin.T + shift)
    assume(not (s.regularized or t.regularized))
    np.testing.assert_allclose(t.mean, lin @ s.mean + shift, rtol=1e-9, atol=1e-9 * np.abs(shift).max())
    expected = lin @ s.covariance @ lin.T
    np.testing.assert_allclose(t.covariance, expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max())


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 8), n=st.integers(2, 40))
def test_precision_of_computed_stats(seed, d, n):
    x = np.random.default_rng(seed).normal(size=(n, d))
    s = compute_stats(x)
    assert np.allclose(s.covariance, s.covariance.T, atol=1e-12, rtol=0)
    try:
        p = precision(s)
    except SingularCovariance:
        return
    scale = np.abs(s.covariance).max() * np.abs(p).max()
    np.testing.assert_allclose(s.covariance @ p, np.eye(d), atol=1e-8 * max(1.0, scale))
