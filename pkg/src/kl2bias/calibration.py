"""Length-bias calibration surfaces and the ratio correction.

A surface holds, for every pair of segment lengths on a grid, the mean
distance between two samples drawn from the *same* Gaussian.  Dividing
a raw distance by the surface value at the two segments' lengths gives a
corrected distance whose same-source expectation is about 1 whatever the
lengths.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .exceptions import (
    CorruptFile,
    DegenerateSurface,
    Kl2BiasError,
    MetricFailure,
    SchemaMismatch,
)
from .metrics import KL2_FAMILY, METRICS, VQ_FAMILY, MetricConfig
from .vq import DEFAULT_K

__all__ = [
    "DEFAULT_GRID",
    "SimulationConfig",
    "CorrectionSurface",
    "simulate_surface",
    "lookup",
    "corrected_distance",
    "save_surface",
    "load_surface",
    "export_surface_csv",
]

log = logging.getLogger(__name__)

DEFAULT_GRID = (20, 30, 50, 75, 100, 150, 200, 300, 500, 1000)
FORMAT_VERSION = 1
MAX_FAILED_FRACTION = 0.10
_REQUIRED_FIELDS = (
    "format_version", "metric_id", "dim", "grid_lengths",
    "trials_per_cell", "seed", "created_at", "values",
)


@dataclass(frozen=True)
class SimulationConfig:
    """What to simulate and how hard.

    ``generator_mean`` / ``generator_cov`` replace the standard normal
    source distribution; they exist to check that the KL2 surfaces do not
    depend on it.
    """

    metric_id: str = "kl2"
    dim: int = 13
    grid_lengths: tuple = DEFAULT_GRID
    trials_per_cell: int = 200
    seed: int = 0
    codebook_k: int = DEFAULT_K
    generator_mean: np.ndarray | None = field(default=None, compare=False)
    generator_cov: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        grid = tuple(int(g) for g in self.grid_lengths)
        object.__setattr__(self, "grid_lengths", grid)
        if self.metric_id not in METRICS:
            raise ValueError(f"unknown metric {self.metric_id!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid_lengths must be non-empty and strictly increasing")
        floor = self.dim + 2 if self.metric_id in KL2_FAMILY else 1
        if grid[0] <= floor:
            raise ValueError(f"grid lengths must exceed {floor} for {self.metric_id}")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be at least 1")


@dataclass(frozen=True, eq=False)
class CorrectionSurface:
    """Mean same-source distance on a (length, length) grid.

    ``stderr`` (standard error of each cell mean) is only available on
    freshly simulated surfaces; it is not persisted.
    """

    metric_id: str
    dim: int
    grid_lengths: tuple
    values: np.ndarray
    trials_per_cell: int
    seed: int
    created_at: str = ""
    codebook_k: int | None = None
    stderr: np.ndarray | None = None

    def __post_init__(self):
        grid = tuple(int(g) for g in self.grid_lengths)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "grid_lengths", grid)
        object.__setattr__(self, "values", values)
        n = len(grid)
        if values.shape != (n, n):
            raise DegenerateSurface(f"values shape {values.shape} does not match {n} grid lengths")
        if any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise DegenerateSurface("grid lengths must be positive and strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise DegenerateSurface("surface values must be finite and positive")
        if not np.allclose(values, values.T, rtol=0.0, atol=1e-9):
            raise DegenerateSurface("surface values are not symmetric")

    @property
    def descriptor(self) -> str:
        if self.codebook_k is not None and self.metric_id in VQ_FAMILY:
            return f"{self.metric_id}(k={self.codebook_k})/seed={self.seed}/trials={self.trials_per_cell}"
        return f"{self.metric_id}/seed={self.seed}/trials={self.trials_per_cell}"


def trial_rng(seed: int, i: int, j: int, trial: int) -> np.random.Generator:
    """Generator for one trial, hashed from (seed, i, j, trial) by SeedSequence."""
    return np.random.default_rng([seed, i, j, trial])


def _draw(rng, n, cfg: SimulationConfig, chol):
    z = rng.standard_normal((n, cfg.dim))
    if chol is not None:
        z = z @ chol.T
    if cfg.generator_mean is not None:
        z = z + np.asarray(cfg.generator_mean, dtype=np.float64)
    return z


def _simulate_cell(cfg: SimulationConfig, i: int, j: int):
    metric = MetricConfig(cfg.metric_id, codebook_k=cfg.codebook_k, seed=cfg.seed)
    chol = None
    if cfg.generator_cov is not None:
        chol = np.linalg.cholesky(np.asarray(cfg.generator_cov, dtype=np.float64))
    n, m = cfg.grid_lengths[i], cfg.grid_lengths[j]
    results = []
    failures = 0
    for trial in range(cfg.trials_per_cell):
        rng = trial_rng(cfg.seed, i, j, trial)
        a = _draw(rng, n, cfg, chol)
        b = _draw(rng, m, cfg, chol)
        try:
            results.append(metric(a, b))
        except Kl2BiasError:
            failures += 1
    if failures > MAX_FAILED_FRACTION * cfg.trials_per_cell:
        raise MetricFailure(
            f"cell ({n}, {m}): {failures}/{cfg.trials_per_cell} trials failed", cell=(n, m)
        )
    arr = np.asarray(results)
    se = arr.std(ddof=1) / math.sqrt(arr.size) if arr.size > 1 else math.nan
    return i, j, float(arr.mean()), float(se)


def _simulate_cell_star(args):
    return _simulate_cell(*args)


def simulate_surface(cfg: SimulationConfig, jobs: int = 1, progress=None) -> CorrectionSurface:
    """Monte Carlo estimate of the same-source distance for every grid cell.

    Cells with i <= j are simulated and mirrored.  Every trial draws from
    its own generator seeded by (seed, i, j, trial), so the surface is the
    same for any ``jobs`` value.  ``progress(done, total, cell)`` is
    called after each cell when given.
    """
    g = len(cfg.grid_lengths)
    tasks = [(cfg, i, j) for i in range(g) for j in range(i, g)]
    values = np.empty((g, g))
    stderr = np.empty((g, g))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(_simulate_cell_star, tasks)
            for done, (i, j, mean, se) in enumerate(results, start=1):
                values[i, j] = values[j, i] = mean
                stderr[i, j] = stderr[j, i] = se
                if progress:
                    progress(done, len(tasks), (cfg.grid_lengths[i], cfg.grid_lengths[j]))
    else:
        for done, task in enumerate(tasks, start=1):
            i, j, mean, se = _simulate_cell(*task)
            values[i, j] = values[j, i] = mean
            stderr[i, j] = stderr[j, i] = se
            if progress:
                progress(done, len(tasks), (cfg.grid_lengths[i], cfg.grid_lengths[j]))

    return CorrectionSurface(
        metric_id=cfg.metric_id,
        dim=cfg.dim,
        grid_lengths=cfg.grid_lengths,
        values=values,
        trials_per_cell=cfg.trials_per_cell,
        seed=cfg.seed,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        codebook_k=cfg.codebook_k if cfg.metric_id in VQ_FAMILY else None,
        stderr=stderr,
    )


def _bracket(log_grid, x):
    """Index of the lower knot and the interpolation weight for log-length x."""
    if x <= log_grid[0]:
        return 0, 0.0
    if x >= log_grid[-1]:
        return len(log_grid) - 1, 0.0
    k = int(np.searchsorted(log_grid, x, side="right")) - 1
    t = (x - log_grid[k]) / (log_grid[k + 1] - log_grid[k])
    return k, t


def lookup(s: CorrectionSurface, n: float, m: float) -> float:
    """Surface value at lengths (n, m), bilinear in log-length.

    Lengths outside the grid are clamped to its edges.
    """
    if n < 2 or m < 2:
        raise ValueError(f"segment lengths must be at least 2, got ({n}, {m})")
    n, m = sorted((n, m))  # exact symmetry
    log_grid = np.log(np.asarray(s.grid_lengths, dtype=np.float64))
    i, ti = _bracket(log_grid, math.log(n))
    j, tj = _bracket(log_grid, math.log(m))
    v = s.values
    i1 = min(i + 1, len(log_grid) - 1)
    j1 = min(j + 1, len(log_grid) - 1)
    return float(
        (1 - ti) * (1 - tj) * v[i, j]
        + ti * (1 - tj) * v[i1, j]
        + (1 - ti) * tj * v[i, j1]
        + ti * tj * v[i1, j1]
    )


def corrected_distance(raw: float, s: CorrectionSurface, n: float, m: float) -> float:
    """Raw distance divided by the simulated same-source value at (n, m)."""
    ref = lookup(s, n, m)
    if not ref > 0:
        raise DegenerateSurface(f"surface value {ref} at ({n}, {m}) is not positive")
    return raw / ref


def surface_to_dict(s: CorrectionSurface) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "metric_id": s.metric_id,
        "dim": s.dim,
        "grid_lengths": list(s.grid_lengths),
        "trials_per_cell": s.trials_per_cell,
        "seed": s.seed,
    }
    if s.codebook_k is not None:
        doc["codebook_k"] = s.codebook_k
    doc["created_at"] = s.created_at
    doc["values"] = [[float(v) for v in row] for row in s.values]
    return doc


def save_surface(s: CorrectionSurface, path) -> None:
    """Write the surface as JSON; floats keep full round-trip precision."""
    text = json.dumps(surface_to_dict(s), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_surface(path) -> CorrectionSurface:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaMismatch(f"{path}: top level must be an object")
    missing = [k for k in _REQUIRED_FIELDS if k not in doc]
    if missing:
        raise SchemaMismatch(f"{path}: missing fields {missing}")
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaMismatch(f"{path}: unsupported format_version {doc['format_version']}")
    if doc["metric_id"] not in METRICS:
        raise SchemaMismatch(f"{path}: unknown metric {doc['metric_id']!r}")
    try:
        return CorrectionSurface(
            metric_id=doc["metric_id"],
            dim=int(doc["dim"]),
            grid_lengths=tuple(doc["grid_lengths"]),
            values=np.array(doc["values"], dtype=np.float64),
            trials_per_cell=int(doc["trials_per_cell"]),
            seed=int(doc["seed"]),
            created_at=str(doc["created_at"]),
            codebook_k=doc.get("codebook_k"),
        )
    except (DegenerateSurface, ValueError, TypeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc


def export_surface_csv(s: CorrectionSurface, path) -> int:
    """Write long-format ``len_a,len_b,value`` rows; returns the row count."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["len_a", "len_b", "value"])
        for i, la in enumerate(s.grid_lengths):
            for j, lb in enumerate(s.grid_lengths):
                writer.writerow([la, lb, repr(float(s.values[i, j]))])
    return len(s.grid_lengths) ** 2
