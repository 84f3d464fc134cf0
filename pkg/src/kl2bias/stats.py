"""Per-segment Gaussian statistics with a ridge fallback for short segments."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import InsufficientData, NonFiniteValue, SingularCovariance
from .features import FeatureMatrix

__all__ = ["RegularizationPolicy", "SegmentStats", "compute_stats", "precision"]


@dataclass(frozen=True)
class RegularizationPolicy:
    """When and how strongly to ridge a sample covariance.

    Parameters
    ----------
    epsilon_scale : float
        Ridge weight relative to the mean variance ``trace(S) / d``.
    condition_limit : float
        Largest accepted condition estimate before the ridge is applied.
    """

    epsilon_scale: float = 1e-6
    condition_limit: float = 1e10

    def __post_init__(self):
        if self.epsilon_scale <= 0:
            raise ValueError("epsilon_scale must be positive")
        if self.condition_limit <= 1:
            raise ValueError("condition_limit must exceed 1")


DEFAULT_POLICY = RegularizationPolicy()


@dataclass(frozen=True, eq=False)
class SegmentStats:
    """Sample mean, covariance and count of one segment."""

    mean: np.ndarray
    covariance: np.ndarray
    count: int
    regularized: bool = False

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ValueError(f"mean {mean.shape} and covariance {cov.shape} disagree")
        if self.count < 2:
            raise InsufficientData(f"need at least 2 samples, got {self.count}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NonFiniteValue("statistics contain non-finite values")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def precision_matrix(self) -> np.ndarray:
        return _invert_spd(self.covariance)


def _invert_spd(cov: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.cho_factor(cov, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    inv = linalg.cho_solve(factor, np.eye(cov.shape[0]), check_finite=False)
    if not np.all(np.isfinite(inv)):
        raise SingularCovariance("inverse covariance is not finite")
    return 0.5 * (inv + inv.T)


def _needs_ridge(cov: np.ndarray, limit: float) -> bool:
    # condition proxy: squared ratio of extreme Cholesky diagonal entries
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return True
    diag = np.abs(np.diag(chol))
    if diag.min() <= 0.0:
        return True
    return (diag.max() / diag.min()) ** 2 > limit


def compute_stats(m, policy: RegularizationPolicy = DEFAULT_POLICY) -> SegmentStats:
    """Mean and unbiased covariance (divisor n - 1) of a feature matrix.

    A singular or badly conditioned covariance gets ``eps * I`` added,
    with ``eps = epsilon_scale * trace(S) / d`` (``epsilon_scale`` alone
    when the trace is zero), and the result is flagged ``regularized``.

    ``m`` may be a :class:`FeatureMatrix` or a 2-D array.
    """
    x = m.values if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D feature array, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise InsufficientData(f"need at least 2 frames, got {n}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("feature matrix contains non-finite values")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)

    regularized = False
    if _needs_ridge(cov, policy.condition_limit):
        trace = np.trace(cov)
        eps = policy.epsilon_scale * trace / d if trace > 0 else policy.epsilon_scale
        cov = cov + eps * np.eye(d)
        regularized = True
    return SegmentStats(mean, cov, n, regularized)


def precision(stats: SegmentStats) -> np.ndarray:
    """Inverse covariance via a Cholesky factorization.

    Raises :class:`SingularCovariance` when the factorization fails, which
    tells the caller to reject the segment.
    """
    return stats.precision_matrix
