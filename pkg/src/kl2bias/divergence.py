"""Symmetric Kullback-Leibler (KL2) distance between Gaussian segment models.

    KL2(A, B) = C(A, B) + M(A, B)
    C(A, B)   = 1/2 [tr(P_A S_B) + tr(P_B S_A)] - d
    M(A, B)   = (mu_A - mu_B) (P_A + P_B) (mu_A - mu_B)^T

with S the covariance, P = S^-1 the precision and d the feature dimension.
The mean term is used without a 1/2 factor.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, NumericalAnomaly
from .stats import SegmentStats, precision

__all__ = ["trace_term", "covariance_term", "mean_term", "kl2", "kl2_no_mean"]

# negative results smaller than this in magnitude are rounding noise
CLAMP_TOL = 1e-9


def _check_dims(a: SegmentStats, b: SegmentStats) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension {a.dim} vs {b.dim}")


def _clamp(value: float, what: str) -> float:
    if value < 0.0:
        if value > -CLAMP_TOL:
            return 0.0
        raise NumericalAnomaly(f"{what} is negative ({value:.3e}); covariance ill-conditioned")
    return value


def trace_term(a: SegmentStats, b: SegmentStats) -> float:
    """Asymmetric term tr(S_b^-1 S_a)."""
    _check_dims(a, b)
    # both factors symmetric: trace of the product is the elementwise sum
    return float(np.sum(precision(b) * a.covariance))


def covariance_term(a: SegmentStats, b: SegmentStats) -> float:
    _check_dims(a, b)
    value = 0.5 * (trace_term(b, a) + trace_term(a, b)) - a.dim
    return _clamp(value, "covariance term")


def mean_term(a: SegmentStats, b: SegmentStats) -> float:
    _check_dims(a, b)
    delta = a.mean - b.mean
    value = float(delta @ (precision(a) + precision(b)) @ delta)
    return _clamp(value, "mean term")


def kl2(a: SegmentStats, b: SegmentStats) -> float:
    """Covariance term plus mean term; symmetric and zero on identical stats."""
    return covariance_term(a, b) + mean_term(a, b)


def kl2_no_mean(a: SegmentStats, b: SegmentStats) -> float:
    """KL2 without the mean term (insensitive to channel/volume offsets)."""
    return covariance_term(a, b)
