"""Vector-quantization similarity measures.

Two codebook-based alternatives to KL2:

* :func:`vq_distance` compares two weighted codebooks directly
  (nearest-centroid squared distance plus a log weight ratio, summed in
  both directions).
* :func:`aqd_distance` scores each segment's frames against the other's
  codebook with the average quantization distortion, which normalizes
  by the number of query frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DimensionMismatch, EmptyInput
from .features import FeatureMatrix

__all__ = ["Codebook", "train_codebook", "aqd", "vq_distance", "aqd_distance"]

DEFAULT_K = 64
SPLIT_DELTA = 1e-3
MAX_LLOYD_ITER = 50
LLOYD_TOL = 1e-6
WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Codebook:
    """Weighted centroids approximating a segment's feature density.

    ``weights`` are the fractions of training frames assigned to each
    centroid.  ``seed`` is kept for provenance; training is deterministic.
    """

    centroids: np.ndarray
    weights: np.ndarray
    trained_on: int
    seed: int = 0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centroids, dtype=np.float64))
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if c.shape[0] < 1 or w.shape != (c.shape[0],):
            raise ValueError(f"centroids {c.shape} and weights {w.shape} disagree")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if c.shape[0] > self.trained_on:
            raise ValueError("more centroids than training frames")
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _as_array(x) -> np.ndarray:
    arr = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.shape[0] == 0:
        raise EmptyInput("no feature vectors")
    return arr


def _assign(x, centroids):
    """Nearest-centroid labels and the exact squared distances to them."""
    labels = cdist(x, centroids, "sqeuclidean").argmin(axis=1)
    diff = x - centroids[labels]
    return labels, np.einsum("ij,ij->i", diff, diff)


def _cell_distortion(labels, dist, k):
    return np.bincount(labels, weights=dist, minlength=k)


def _lloyd(x, centroids, history):
    k = centroids.shape[0]
    prev = math.inf
    for _ in range(MAX_LLOYD_ITER):
        labels, dist = _assign(x, centroids)
        total = math.fsum(dist)
        if history is not None:
            history.append((k, total))
        if total == 0.0 or (prev < math.inf and prev - total <= LLOYD_TOL * prev):
            return centroids, labels, dist
        prev = total

        counts = np.bincount(labels, minlength=k)
        sums = np.stack(
            [np.bincount(labels, weights=col, minlength=k) for col in x.T], axis=1
        )
        filled = counts > 0
        centroids = centroids.copy()
        centroids[filled] = sums[filled] / counts[filled, None]

        # an empty cell takes over the worst-fit frame of the most distorted cell
        for empty in np.flatnonzero(~filled):
            labels, dist = _assign(x, centroids)
            cells = _cell_distortion(labels, dist, k)
            worst = int(np.argmax(cells))
            members = np.flatnonzero(labels == worst)
            far = members[np.argmax(dist[members])]
            centroids[empty] = x[far]

    labels, dist = _assign(x, centroids)
    if history is not None:
        history.append((k, math.fsum(dist)))
    return centroids, labels, dist


def train_codebook(m, k: int = DEFAULT_K, seed: int = 0, *, history=None) -> Codebook:
    """LBG codebook: binary splitting from the global mean plus Lloyd passes.

    The effective size is ``min(k, number of distinct frames)``.  At each
    splitting round the most distorted cells are split into
    ``c +/- 1e-3 * std(cell)``, then Lloyd iterations run until the total
    distortion changes by less than 1e-6 relative (at most 50 passes).

    If ``history`` is a list, ``(codebook_size, total_distortion)`` is
    appended for every Lloyd pass.
    """
    x = _as_array(m)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    n = x.shape[0]
    target = min(k, np.unique(x, axis=0).shape[0])

    centroids = x.mean(axis=0, keepdims=True)
    labels, dist = _assign(x, centroids)
    if history is not None:
        history.append((1, math.fsum(dist)))

    while centroids.shape[0] < target:
        size = centroids.shape[0]
        cells = _cell_distortion(labels, dist, size)
        n_split = min(size, target - size)
        order = np.argsort(-cells, kind="stable")
        chosen = [int(c) for c in order[:n_split] if cells[c] > 0.0]
        new = []
        for cell in chosen:
            delta = SPLIT_DELTA * x[labels == cell].std(axis=0)
            new.append(centroids[cell] + delta)
            centroids[cell] = centroids[cell] - delta
        centroids = np.vstack([centroids, *new])
        centroids, labels, dist = _lloyd(x, centroids, history)

    counts = np.bincount(labels, minlength=centroids.shape[0])
    return Codebook(centroids, counts / n, trained_on=n, seed=seed)


def aqd(x, c: Codebook) -> float:
    """Average quantization distortion of frames ``x`` against codebook ``c``.

    Sum over frames of the squared distance to the nearest centroid,
    divided by the number of frames.  The sum is exactly rounded, so
    repeating ``x`` leaves the result bit-identical.
    """
    x = _as_array(x)
    if x.shape[1] != c.dim:
        raise DimensionMismatch(f"features have dim {x.shape[1]}, codebook {c.dim}")
    nearest = cdist(x, c.centroids, "sqeuclidean").min(axis=1)
    return math.fsum(nearest) / x.shape[0]


def _directed_vq(a: Codebook, b: Codebook) -> float:
    nearest = cdist(a.centroids, b.centroids, "sqeuclidean").argmin(axis=1)
    diff = a.centroids - b.centroids[nearest]
    sq = np.einsum("ij,ij->i", diff, diff)
    wa = np.maximum(a.weights, WEIGHT_FLOOR)
    wb = np.maximum(b.weights[nearest], WEIGHT_FLOOR)
    return math.fsum(a.weights * (0.5 * sq + np.log(wa / wb)))


def vq_distance(a: Codebook, b: Codebook) -> float:
    """Symmetrized codebook divergence D(a||b) + D(b||a).

    ``D(a||b) = sum_i w_i [ |c_i - c'_n(i)|^2 / 2 + log(w_i / w'_n(i)) ]``
    where ``n(i)`` is the centroid of ``b`` nearest to ``c_i``.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"codebook dims {a.dim} vs {b.dim}")
    return _directed_vq(a, b) + _directed_vq(b, a)


def aqd_distance(a_features, b_features, k: int = DEFAULT_K, seed: int = 0) -> float:
    """Mean of the two cross AQDs, each segment against the other's codebook."""
    a = _as_array(a_features)
    b = _as_array(b_features)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dims {a.shape[1]} vs {b.shape[1]}")
    return 0.5 * (aqd(a, train_codebook(b, k, seed)) + aqd(b, train_codebook(a, k, seed)))
