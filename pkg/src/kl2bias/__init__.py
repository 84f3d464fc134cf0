"""Length-bias-aware KL2 and VQ distances for speaker clustering.

The symmetric KL divergence between Gaussian segment models grows when
either segment is short.  This package simulates that inflation on a
grid of segment lengths and divides it out, and provides two codebook
distances and average-linkage clustering to compare against.
"""

__version__ = "0.1.0"

from .bench import ClusterScore, SyntheticSpec, evaluate, synth_dataset, synth_segments
from .calibration import (
    CorrectionSurface,
    SimulationConfig,
    corrected_distance,
    load_surface,
    lookup,
    save_surface,
    simulate_surface,
)
from .clustering import Dendrogram, DistanceMatrix, agglomerate, apply_correction, cut, cut_k, pairwise_distances
from .features import AudioBuffer, FeatureMatrix, FrameConfig, extract_mfcc, load_wav, read_features, write_features
from .divergence import covariance_term, kl2, kl2_no_mean, mean_term, trace_term
from .metrics import MetricConfig
from .stats import RegularizationPolicy, SegmentStats, compute_stats, precision
from .vq import Codebook, aqd, aqd_distance, train_codebook, vq_distance
