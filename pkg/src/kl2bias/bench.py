"""Synthetic labeled speaker datasets and clustering scores.

Each synthetic speaker is a single d-dimensional Gaussian with its own
mean and a random SPD covariance; segments are i.i.d. draws of random
length from it.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.stats import special_ortho_group

from .exceptions import IdMismatch
from .features import FeatureMatrix, read_features, write_features

__all__ = [
    "SyntheticSpec",
    "ManifestEntry",
    "DatasetManifest",
    "ClusterScore",
    "synth_segments",
    "synth_dataset",
    "read_manifest",
    "write_manifest",
    "evaluate",
]

LENGTH_SCALES = ("uniform", "log-uniform")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic multi-speaker dataset.

    ``speaker_separation`` is the standard deviation of the speaker means
    in units of the (unit-scale) within-speaker spread.  Segment lengths
    are drawn uniformly from ``length_range``, or log-uniformly when
    ``length_scale="log-uniform"``.
    """

    num_speakers: int = 5
    dim: int = 13
    segments_per_speaker: int = 4
    length_range: tuple = (600, 18900)
    speaker_separation: float = 1.0
    seed: int = 0
    length_scale: str = "uniform"

    def __post_init__(self):
        lo, hi = self.length_range
        if self.num_speakers < 2:
            raise ValueError("need at least two speakers")
        if self.segments_per_speaker < 1:
            raise ValueError("need at least one segment per speaker")
        if lo < self.dim + 2 or hi < lo:
            raise ValueError(f"length_range must satisfy dim + 2 <= min <= max, got {self.length_range}")
        if self.speaker_separation <= 0:
            raise ValueError("speaker_separation must be positive")
        if self.length_scale not in LENGTH_SCALES:
            raise ValueError(f"length_scale must be one of {LENGTH_SCALES}")


class ManifestEntry(NamedTuple):
    segment_id: str
    path: str
    label: str
    frames: int


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    root: Path | None = None

    def __post_init__(self):
        ids = [e.segment_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest segment ids must be unique")

    @property
    def labels(self) -> dict:
        return {e.segment_id: e.label for e in self.entries}

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def load_segments(self) -> list:
        out = []
        for e in self.entries:
            m = read_features(self.resolve(e))
            out.append(FeatureMatrix(m.values, segment_id=e.segment_id, meta=m.meta))
        return out


@dataclass(frozen=True)
class ClusterScore:
    pairwise_precision: float
    pairwise_recall: float
    pairwise_f1: float
    purity: float

    def as_dict(self) -> dict:
        return {
            "pairwise_precision": self.pairwise_precision,
            "pairwise_recall": self.pairwise_recall,
            "pairwise_f1": self.pairwise_f1,
            "purity": self.purity,
        }


def _random_spd(rng, dim):
    eigvals = rng.uniform(0.5, 2.0, size=dim)
    if dim == 1:
        return np.diag(eigvals)
    rot = special_ortho_group.rvs(dim, random_state=rng)
    cov = rot @ np.diag(eigvals) @ rot.T
    return 0.5 * (cov + cov.T)


def synth_segments(spec: SyntheticSpec) -> list:
    """Generate ``(FeatureMatrix, speaker_label)`` pairs in memory."""
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.length_range
    out = []
    for s in range(spec.num_speakers):
        mean = rng.normal(0.0, spec.speaker_separation, size=spec.dim)
        chol = np.linalg.cholesky(_random_spd(rng, spec.dim))
        label = f"spk{s:02d}"
        for g in range(spec.segments_per_speaker):
            if spec.length_scale == "uniform":
                n = int(rng.integers(lo, hi + 1))
            else:
                n = int(min(hi, np.floor(np.exp(rng.uniform(np.log(lo), np.log(hi + 1))))))
            rows = rng.standard_normal((n, spec.dim)) @ chol.T + mean
            out.append((FeatureMatrix(rows, segment_id=f"{label}_seg{g:02d}"), label))
    return out


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ManifestEntry._fields)
        for e in manifest.entries:
            writer.writerow(e)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(ManifestEntry._fields):
            raise ValueError(f"{path}: header must be {','.join(ManifestEntry._fields)}")
        entries = tuple(
            ManifestEntry(r["segment_id"], r["path"], r["label"], int(r["frames"])) for r in reader
        )
    return DatasetManifest(entries, root=path.parent)


def synth_dataset(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Write one feature CSV per synthetic segment plus ``manifest.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seg, label in synth_segments(spec):
        fname = f"{seg.segment_id}.csv"
        write_features(seg, out_dir / fname)
        entries.append(ManifestEntry(seg.segment_id, fname, label, seg.rows))
    manifest = DatasetManifest(tuple(entries), root=out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest


def evaluate(assign: dict, manifest) -> ClusterScore:
    """Pairwise precision/recall/F1 and purity of a flat clustering.

    ``manifest`` is a :class:`DatasetManifest` or a ``{segment_id: label}``
    mapping.  Precision is 1 when no pair is predicted together, recall is
    1 when no pair truly belongs together.
    """
    truth = manifest.labels if isinstance(manifest, DatasetManifest) else dict(manifest)
    if set(assign) != set(truth):
        missing = sorted(set(truth) - set(assign))
        extra = sorted(set(assign) - set(truth))
        raise IdMismatch(f"assignment/manifest ids differ: missing {missing}, unexpected {extra}")

    ids = sorted(truth)
    tp = pred_pairs = true_pairs = 0
    for a, b in combinations(ids, 2):
        same_pred = assign[a] == assign[b]
        same_true = truth[a] == truth[b]
        pred_pairs += same_pred
        true_pairs += same_true
        tp += same_pred and same_true

    precision = tp / pred_pairs if pred_pairs else 1.0
    recall = tp / true_pairs if true_pairs else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    clusters: dict = {}
    for sid in ids:
        clusters.setdefault(assign[sid], Counter())[truth[sid]] += 1
    purity = sum(max(c.values()) for c in clusters.values()) / len(ids)
    return ClusterScore(precision, recall, f1, purity)
