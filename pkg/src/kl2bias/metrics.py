"""Uniform access to the four segment distances by name.

Each metric is split into a per-segment ``prepare`` step (statistics or
codebook) and a pairwise ``distance`` step, so callers comparing many
segments pay for the per-segment work only once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .features import FeatureMatrix
from .divergence import kl2, kl2_no_mean
from .stats import DEFAULT_POLICY, RegularizationPolicy, compute_stats
from .vq import DEFAULT_K, Codebook, aqd, train_codebook, vq_distance

__all__ = ["METRICS", "KL2_FAMILY", "VQ_FAMILY", "MetricConfig"]

METRICS = ("kl2", "kl2_no_mean", "vq", "aqd")
KL2_FAMILY = frozenset({"kl2", "kl2_no_mean"})
VQ_FAMILY = frozenset({"vq", "aqd"})


class _VQSegment(NamedTuple):
    features: np.ndarray
    codebook: Codebook


@dataclass(frozen=True)
class MetricConfig:
    """A named distance plus the parameters it needs."""

    metric_id: str = "kl2"
    codebook_k: int = DEFAULT_K
    seed: int = 0
    policy: RegularizationPolicy = field(default=DEFAULT_POLICY)

    def __post_init__(self):
        if self.metric_id not in METRICS:
            raise ValueError(f"unknown metric {self.metric_id!r}; choose from {METRICS}")
        if self.codebook_k < 1:
            raise ValueError("codebook_k must be at least 1")

    @property
    def descriptor(self) -> str:
        if self.metric_id in VQ_FAMILY:
            return f"{self.metric_id}(k={self.codebook_k})"
        return self.metric_id

    def prepare(self, x):
        values = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
        if self.metric_id in KL2_FAMILY:
            return compute_stats(values, self.policy)
        return _VQSegment(values, train_codebook(values, self.codebook_k, self.seed))

    def distance(self, a, b) -> float:
        if self.metric_id == "kl2":
            return kl2(a, b)
        if self.metric_id == "kl2_no_mean":
            return kl2_no_mean(a, b)
        if self.metric_id == "vq":
            return vq_distance(a.codebook, b.codebook)
        return 0.5 * (aqd(a.features, b.codebook) + aqd(b.features, a.codebook))

    def __call__(self, a, b) -> float:
        return self.distance(self.prepare(a), self.prepare(b))
