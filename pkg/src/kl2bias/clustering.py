"""Pairwise distance matrices, average-linkage agglomeration and flat cuts."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import CorrectionSurface, corrected_distance
from .exceptions import InvalidK, Kl2BiasError, MalformedRow, MetricFailure
from .features import FeatureMatrix
from .metrics import MetricConfig

__all__ = [
    "DistanceMatrix",
    "Dendrogram",
    "pairwise_distances",
    "apply_correction",
    "agglomerate",
    "cut",
    "cut_k",
    "write_distance_matrix",
    "read_distance_matrix",
    "write_assignment",
    "read_assignment",
]


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    ids: tuple
    lengths: tuple
    values: np.ndarray
    metric_descriptor: str = ""

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        values = np.asarray(self.values, dtype=np.float64)
        n = len(ids)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "lengths", tuple(int(x) for x in self.lengths))
        object.__setattr__(self, "values", values)
        if len(set(ids)) != n:
            raise ValueError("segment ids must be unique")
        if values.shape != (n, n) or len(self.lengths) != n:
            raise ValueError(f"{n} ids but values {values.shape} and {len(self.lengths)} lengths")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("distances must be finite and nonnegative")
        if np.any(np.diag(values) != 0):
            raise ValueError("diagonal must be zero")
        if not np.allclose(values, values.T, rtol=0.0, atol=1e-9):
            raise ValueError("distance matrix is not symmetric")

    def __len__(self):
        return len(self.ids)


def _segment_id(seg, index):
    sid = getattr(seg, "segment_id", "")
    return sid if sid else f"seg{index:03d}"


def _pair_value(metric, surface, prepared, lengths, i, j):
    raw = metric.distance(prepared[i], prepared[j])
    if surface is not None:
        return corrected_distance(raw, surface, lengths[i], lengths[j])
    return raw


def pairwise_distances(
    segments,
    metric: MetricConfig = MetricConfig(),
    surface: CorrectionSurface | None = None,
    jobs: int = 1,
) -> DistanceMatrix:
    """Distance between every pair of segments, optionally length-corrected.

    With a ``surface`` each raw distance is divided by the surface value at
    the two segments' frame counts.  Any failing segment or pair aborts the
    whole matrix with a :class:`MetricFailure` naming the culprits.
    """
    segments = [s if isinstance(s, FeatureMatrix) else FeatureMatrix(s) for s in segments]
    if len(segments) < 2:
        raise ValueError("need at least two segments")
    if len({s.dim for s in segments}) != 1:
        raise ValueError("segments have different feature dimensions")
    if surface is not None:
        if surface.metric_id != metric.metric_id:
            raise ValueError(
                f"surface was simulated for {surface.metric_id!r}, not {metric.metric_id!r}"
            )
        if surface.dim != segments[0].dim:
            raise ValueError(f"surface dim {surface.dim} != feature dim {segments[0].dim}")

    ids = [_segment_id(s, k) for k, s in enumerate(segments)]
    lengths = [s.rows for s in segments]
    n = len(segments)

    failures = []
    prepared = [None] * n
    for k, seg in enumerate(segments):
        try:
            prepared[k] = metric.prepare(seg)
        except Kl2BiasError as exc:
            failures.append(f"{ids[k]}: {exc}")
    if failures:
        raise MetricFailure("cannot model segments: " + "; ".join(failures))

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def evaluate(pair):
        try:
            return _pair_value(metric, surface, prepared, lengths, *pair)
        except Kl2BiasError as exc:
            return exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluate, pairs))
    else:
        results = [evaluate(p) for p in pairs]

    values = np.zeros((n, n))
    for (i, j), res in zip(pairs, results):
        if isinstance(res, Exception):
            failures.append(f"({ids[i]}, {ids[j]}): {res}")
            continue
        values[i, j] = values[j, i] = res
    if failures:
        raise MetricFailure("pair failures: " + "; ".join(failures))

    descriptor = metric.descriptor
    if surface is not None:
        descriptor += f"/corrected[{surface.descriptor}]"
    return DistanceMatrix(tuple(ids), tuple(lengths), values, descriptor)


def apply_correction(d: DistanceMatrix, surface: CorrectionSurface) -> DistanceMatrix:
    """Divide every entry of a raw matrix by the surface value at its lengths.

    Equivalent to calling :func:`pairwise_distances` with ``surface`` but
    reuses an already computed raw matrix.
    """
    if "/corrected[" in d.metric_descriptor:
        raise ValueError("distance matrix is already corrected")
    n = len(d)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = corrected_distance(
                d.values[i, j], surface, d.lengths[i], d.lengths[j]
            )
    descriptor = f"{d.metric_descriptor}/corrected[{surface.descriptor}]"
    return DistanceMatrix(d.ids, d.lengths, values, descriptor)


@dataclass(frozen=True)
class Dendrogram:
    """Binary merge tree.

    Node ``i < len(leaves)`` is leaf ``i``; merge number ``t`` creates node
    ``len(leaves) + t``.  ``merges`` holds ``(left, right, height)``.
    """

    leaves: tuple
    merges: tuple

    def __post_init__(self):
        n = len(self.leaves)
        if len(self.merges) != max(n - 1, 0):
            raise ValueError(f"{n} leaves need {n - 1} merges, got {len(self.merges)}")
        used = set()
        prev = -np.inf
        for t, (left, right, height) in enumerate(self.merges):
            for node in (left, right):
                if not 0 <= node < n + t or node in used:
                    raise ValueError(f"merge {t} references invalid node {node}")
                used.add(node)
            if height < prev:
                raise ValueError("merge heights must be non-decreasing")
            prev = height

    @property
    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h in self.merges])

    def node_height(self, node: int) -> float:
        n = len(self.leaves)
        return 0.0 if node < n else self.merges[node - n][2]

    def to_dict(self) -> dict:
        n = len(self.leaves)

        def build(node):
            if node < n:
                return {"id": self.leaves[node], "height": 0.0}
            left, right, h = self.merges[node - n]
            return {"id": node, "height": h, "children": [build(left), build(right)]}

        root = 2 * n - 2 if n > 1 else 0
        return build(root)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_newick(self) -> str:
        """Newick string; branch length = parent height - child height."""
        n = len(self.leaves)

        def name(label):
            if any(ch in label for ch in " ()[]':;,"):
                return "'" + label.replace("'", "''") + "'"
            return label

        def build(node, parent_height):
            length = parent_height - self.node_height(node)
            if node < n:
                text = name(self.leaves[node])
            else:
                left, right, h = self.merges[node - n]
                text = f"({build(left, h)},{build(right, h)})"
            return f"{text}:{length:.12g}"

        if n == 1:
            return name(self.leaves[0]) + ";"
        left, right, h = self.merges[-1]
        return f"({build(left, h)},{build(right, h)});"

    @classmethod
    def from_dict(cls, doc: dict) -> "Dendrogram":
        leaves = []
        merges = []

        def walk(node):
            if "children" not in node:
                leaves.append(str(node["id"]))
                return ("leaf", len(leaves) - 1)
            left = walk(node["children"][0])
            right = walk(node["children"][1])
            merges.append((left, right, float(node["height"])))
            return ("merge", len(merges) - 1)

        walk(doc)
        n = len(leaves)
        # rebuild merge order by height so node numbering follows the merge sequence
        order = sorted(range(len(merges)), key=lambda t: (merges[t][2], t))
        rank = {t: r for r, t in enumerate(order)}

        def node_index(ref):
            kind, k = ref
            return k if kind == "leaf" else n + rank[k]

        rebuilt = [
            (node_index(merges[t][0]), node_index(merges[t][1]), merges[t][2]) for t in order
        ]
        return cls(tuple(leaves), tuple(rebuilt))


def agglomerate(d: DistanceMatrix) -> Dendrogram:
    """Average-linkage (UPGMA) clustering of a distance matrix.

    Each step merges the pair of clusters with the smallest mean
    inter-member distance.  Exact ties go to the lexicographically
    smallest pair of cluster keys, a cluster's key being the smallest
    segment id it contains, so the result does not depend on input order.
    """
    n = len(d)
    ids = d.ids
    # pairwise sums of member distances between active clusters
    sums = {}
    size = {}
    key = {}
    for i in range(n):
        size[i] = 1
        key[i] = ids[i]
        for j in range(i + 1, n):
            sums[(i, j)] = float(d.values[i, j])
    active = list(range(n))
    merges = []
    prev = -np.inf
    next_node = n

    while len(active) > 1:
        best = None
        for a_pos, a in enumerate(active):
            for b in active[a_pos + 1:]:
                avg = sums[(a, b)] / (size[a] * size[b])
                tie_key = tuple(sorted((key[a], key[b])))
                cand = (avg, tie_key, a, b)
                if best is None or cand[:2] < best[:2]:
                    best = cand
        avg, _, a, b = best
        left, right = (a, b) if key[a] <= key[b] else (b, a)
        height = max(avg, prev)
        merges.append((left, right, height))
        prev = height

        new = next_node
        next_node += 1
        active = [c for c in active if c not in (a, b)]
        for c in active:
            s_a = sums[(min(a, c), max(a, c))]
            s_b = sums[(min(b, c), max(b, c))]
            sums[(c, new)] = s_a + s_b
        size[new] = size[a] + size[b]
        key[new] = min(key[a], key[b])
        active.append(new)

    return Dendrogram(tuple(ids), tuple(merges))


def _components(t: Dendrogram, n_merges: int) -> dict:
    n = len(t.leaves)
    parent = list(range(2 * n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, (left, right, _) in enumerate(t.merges[:n_merges]):
        node = n + k
        parent[find(left)] = node
        parent[find(right)] = node

    labels = {}
    assignment = {}
    for i, leaf in enumerate(t.leaves):
        root = find(i)
        if root not in labels:
            labels[root] = len(labels)
        assignment[leaf] = labels[root]
    return assignment


def cut(t: Dendrogram, threshold: float) -> dict:
    """Flat clusters from the merges at or below ``threshold``.

    Returns ``{segment_id: label}`` with labels numbered from 0 in order of
    first appearance among the leaves.
    """
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    kept = sum(1 for _, _, h in t.merges if h <= threshold)
    return _components(t, kept)


def cut_k(t: Dendrogram, k: int) -> dict:
    """Exactly ``k`` flat clusters by undoing the last ``k - 1`` merges."""
    n = len(t.leaves)
    if not 1 <= k <= n:
        raise InvalidK(f"k must lie in [1, {n}], got {k}")
    return _components(t, n - k)


def write_distance_matrix(d: DistanceMatrix, path) -> None:
    buf = io.StringIO()
    buf.write(f"# metric_descriptor={d.metric_descriptor}\n")
    buf.write("# lengths=" + ",".join(str(x) for x in d.lengths) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["segment_id", *d.ids])
    for sid, row in zip(d.ids, d.values):
        writer.writerow([sid, *(repr(float(v)) for v in row)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_distance_matrix(path) -> DistanceMatrix:
    meta = {}
    body = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line.strip():
                body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise MalformedRow(f"{path}: empty distance matrix")
    ids = rows[0][1:]
    values = []
    for r in rows[1:]:
        if len(r) != len(ids) + 1:
            raise MalformedRow(f"{path}: row {r[:1]} has {len(r) - 1} values, expected {len(ids)}")
        values.append([float(v) for v in r[1:]])
    row_ids = [r[0] for r in rows[1:]]
    if row_ids != ids:
        raise MalformedRow(f"{path}: row ids do not match column ids")
    lengths = [int(x) for x in meta["lengths"].split(",")] if meta.get("lengths") else [0] * len(ids)
    return DistanceMatrix(tuple(ids), tuple(lengths), np.array(values), meta.get("metric_descriptor", ""))


def write_assignment(assignment: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["segment_id", "label"])
        for sid, label in assignment.items():
            writer.writerow([sid, label])


def read_assignment(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["segment_id"]: int(row["label"]) for row in csv.DictReader(fh)}
