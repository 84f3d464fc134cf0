"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 success, 1 operational failure, 2 partial batch failure.
Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import SyntheticSpec, evaluate, read_manifest, synth_dataset
from .calibration import (
    DEFAULT_GRID,
    SimulationConfig,
    export_surface_csv,
    load_surface,
    save_surface,
    simulate_surface,
)
from .clustering import (
    agglomerate,
    cut,
    cut_k,
    pairwise_distances,
    read_assignment,
    read_distance_matrix,
    write_assignment,
    write_distance_matrix,
)
from .exceptions import Kl2BiasError, SubsetTooLarge
from .features import FeatureMatrix, FrameConfig, extract_mfcc, load_wav, read_features, write_features
from .metrics import METRICS, MetricConfig
from .vq import DEFAULT_K

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2


def _err(msg):
    print(msg, file=sys.stderr)


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _wav_inputs(paths):
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix.lower() == ".wav"))
        else:
            out.append(p)
    return out


def cmd_extract(args):
    cfg = FrameConfig(args.frame_ms, args.hop_ms, args.preemphasis, args.mel_filters, args.num_ceps)
    inputs = _wav_inputs(args.inputs)
    if not inputs:
        _err("warning: no WAV inputs found")
        return EXIT_OK
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = 0
    for path in inputs:
        try:
            feats = extract_mfcc(load_wav(path), cfg)
            write_features(feats, out_dir / f"{path.stem}.csv")
        except (Kl2BiasError, OSError) as exc:
            failed += 1
            _err(f"{path}: {type(exc).__name__}: {exc}")
    if failed == 0:
        return EXIT_OK
    return EXIT_PARTIAL if failed < len(inputs) else EXIT_FAIL


def cmd_simulate(args):
    cfg = SimulationConfig(
        metric_id=args.metric,
        dim=args.dim,
        grid_lengths=tuple(args.grid),
        trials_per_cell=args.trials,
        seed=args.seed,
        codebook_k=args.codebook_k,
    )

    def progress(done, total, cell):
        _err(f"cell {done}/{total} {cell} done")

    surface = simulate_surface(cfg, jobs=args.jobs, progress=progress)
    save_surface(surface, args.out)
    _err(f"grid {list(cfg.grid_lengths)}: min {surface.values.min():.6g}, max {surface.values.max():.6g}")
    return EXIT_OK


def _load_segments(args):
    if args.manifest:
        return read_manifest(args.manifest).load_segments()
    return [read_features(p) for p in args.features]


def cmd_distance(args):
    segments = _load_segments(args)
    if len(segments) < 2:
        _err("need at least two segments")
        return EXIT_FAIL
    metric = MetricConfig(args.metric, codebook_k=args.codebook_k, seed=args.seed)
    surface = load_surface(args.surface) if args.surface else None
    d = pairwise_distances(segments, metric, surface, jobs=args.jobs)
    write_distance_matrix(d, args.out)
    return EXIT_OK


def cmd_cluster(args):
    d = read_distance_matrix(args.matrix)
    tree = agglomerate(d)
    assign = cut(tree, args.threshold) if args.threshold is not None else cut_k(tree, args.k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dendrogram.json").write_text(tree.to_json() + "\n", encoding="utf-8")
    (out / "dendrogram.nwk").write_text(tree.to_newick() + "\n", encoding="utf-8")
    write_assignment(assign, out / "assignment.csv")
    _err(f"{len(set(assign.values()))} clusters from {len(assign)} segments")
    return EXIT_OK


def _subsets(rows, n, m, rng, contiguous):
    if contiguous:
        a0 = rng.integers(0, rows - n + 1)
        b0 = rng.integers(0, rows - m + 1)
        return np.arange(a0, a0 + n), np.arange(b0, b0 + m)
    if n + m <= rows:
        idx = rng.permutation(rows)
        return np.sort(idx[:n]), np.sort(idx[n:n + m])
    return np.sort(rng.choice(rows, n, replace=False)), np.sort(rng.choice(rows, m, replace=False))


def sweep(features: FeatureMatrix, lengths, metric: MetricConfig, trials: int, seed: int, contiguous=False):
    """Mean distance between random subsets of one feature matrix.

    Returns ``(n_a, n_b, mean)`` rows for every ordered length pair.  Row
    subsets are disjoint when both fit in the matrix together.
    """
    lengths = sorted(set(lengths))
    if lengths[-1] > features.rows:
        raise SubsetTooLarge(f"subset of {lengths[-1]} rows requested from {features.rows}")
    x = features.values
    table = {}
    for i, n in enumerate(lengths):
        for j in range(i, len(lengths)):
            m = lengths[j]
            vals = []
            for t in range(trials):
                rng = np.random.default_rng([seed, i, j, t])
                ia, ib = _subsets(features.rows, n, m, rng, contiguous)
                vals.append(metric(x[ia], x[ib]))
            table[(n, m)] = table[(m, n)] = float(np.mean(vals))
    return [(n, m, table[(n, m)]) for n in lengths for m in lengths]


def cmd_sweep(args):
    feats = read_features(args.features)
    metric = MetricConfig(args.metric, codebook_k=args.codebook_k, seed=args.seed)
    rows = sweep(feats, args.subset_lengths, metric, args.trials, args.seed, args.contiguous)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n_a", "n_b", "mean_distance"])
        for n, m, v in rows:
            writer.writerow([n, m, repr(v)])
    return EXIT_OK


def cmd_synth(args):
    spec = SyntheticSpec(
        num_speakers=args.speakers,
        dim=args.dim,
        segments_per_speaker=args.segments_per_speaker,
        length_range=(args.min_frames, args.max_frames),
        speaker_separation=args.separation,
        seed=args.seed,
        length_scale=args.length_scale,
    )
    manifest = synth_dataset(spec, args.out_dir)
    _err(f"wrote {len(manifest.entries)} segments to {args.out_dir}")
    return EXIT_OK


def cmd_evaluate(args):
    score = evaluate(read_assignment(args.assignment), read_manifest(args.manifest))
    for key, value in score.as_dict().items():
        print(f"{key}={value:.6f}")
    return EXIT_OK


def cmd_surface_export(args):
    n = export_surface_csv(load_surface(args.surface), args.out)
    _err(f"wrote {n} rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kl2bias", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def metric_flags(sp):
        sp.add_argument("--metric", choices=METRICS, default="kl2")
        sp.add_argument("--codebook-k", type=int, default=DEFAULT_K)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("extract", help="WAV files or directories -> feature CSVs")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--frame-ms", type=float, default=25.0)
    sp.add_argument("--hop-ms", type=float, default=10.0)
    sp.add_argument("--preemphasis", type=float, default=0.97)
    sp.add_argument("--mel-filters", type=int, default=26)
    sp.add_argument("--num-ceps", type=int, default=13)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("simulate", help="simulate a length-bias correction surface")
    metric_flags(sp)
    sp.add_argument("--grid", type=_int_list, default=list(DEFAULT_GRID))
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--dim", type=int, default=13)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("distance", help="pairwise distance matrix")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--features", nargs="+")
    metric_flags(sp)
    sp.add_argument("--surface", help="correction surface JSON")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("cluster", help="average-linkage clustering of a distance matrix")
    sp.add_argument("matrix")
    how = sp.add_mutually_exclusive_group(required=True)
    how.add_argument("--threshold", type=float)
    how.add_argument("--k", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("sweep", help="distance vs. subset length on one feature file")
    sp.add_argument("features")
    sp.add_argument("--subset-lengths", type=_int_list, required=True)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--contiguous", action="store_true", help="contiguous spans instead of random rows")
    metric_flags(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("synth", help="write a synthetic labeled dataset")
    sp.add_argument("--speakers", type=int, default=5)
    sp.add_argument("--dim", type=int, default=13)
    sp.add_argument("--segments-per-speaker", type=int, default=4)
    sp.add_argument("--min-frames", type=int, default=600)
    sp.add_argument("--max-frames", type=int, default=18900)
    sp.add_argument("--separation", type=float, default=1.0)
    sp.add_argument("--length-scale", choices=("uniform", "log-uniform"), default="uniform")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("evaluate", help="score an assignment against a manifest")
    sp.add_argument("assignment")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("surface-export", help="surface JSON -> long-format CSV")
    sp.add_argument("surface")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_surface_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Kl2BiasError, ValueError, OSError) as exc:
        cell = getattr(exc, "cell", None)
        where = f" (cell {cell})" if cell else ""
        _err(f"error{where}: {type(exc).__name__}: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
