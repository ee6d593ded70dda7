"""Two-stage iterative Procrustes matching for VQ-based speaker verification."""

from .codebook import (
    Codebook,
    KMeansConfig,
    quantize,
    read_codebook,
    read_registry,
    train_codebook,
    write_codebook,
    write_registry,
)
from .evaluation import (
    DetCurve,
    RetentionReport,
    SummaryRow,
    TrialEntry,
    TrialError,
    TrialRunOutcome,
    aggregate_retention,
    compute_det,
    improvement,
    pair_retention_report,
    read_retention_csv,
    read_scores_csv,
    read_trial_list,
    run_trials,
    write_det_csv,
    write_retention_csv,
    write_scores_csv,
    write_summary_csv,
    write_trial_list,
)
from .feature_io import (
    AudioSignal,
    FeatureSet,
    FormatError,
    FrameMask,
    MfccConfig,
    apply_mask,
    extract_mfcc,
    mix_noise,
    read_features,
    read_mask,
    read_wav,
    write_features,
    write_mask,
    write_wav,
)
from .matcher import (
    MatchConfig,
    MatchResult,
    RemovedPair,
    TraceEntry,
    initial_match,
    match,
    stage1_remove,
    stage2_recycle,
)
from .procrustes import (
    AlignmentResult,
    PairSet,
    align,
    residual_without,
    svd_small,
)
from .rng import Xoshiro256StarStar, derive_seed
from .scoring import (
    SIGMA_FLOOR,
    TrialScore,
    ZNormStats,
    estimate_znorm,
    raw_score,
    read_znorm_stats,
    write_znorm_stats,
    znorm,
)
from .synth import (
    SpeakerData,
    SynthCorpus,
    SynthSpec,
    planted_outliers,
    planted_rotation,
    synth_population,
    write_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "AudioSignal",
    "Codebook",
    "DetCurve",
    "FeatureSet",
    "FormatError",
    "FrameMask",
    "KMeansConfig",
    "MatchConfig",
    "MatchResult",
    "MfccConfig",
    "PairSet",
    "RemovedPair",
    "RetentionReport",
    "SIGMA_FLOOR",
    "SpeakerData",
    "SummaryRow",
    "SynthCorpus",
    "SynthSpec",
    "TraceEntry",
    "TrialEntry",
    "TrialError",
    "TrialRunOutcome",
    "TrialScore",
    "Xoshiro256StarStar",
    "ZNormStats",
    "aggregate_retention",
    "align",
    "apply_mask",
    "compute_det",
    "derive_seed",
    "estimate_znorm",
    "extract_mfcc",
    "improvement",
    "initial_match",
    "match",
    "mix_noise",
    "pair_retention_report",
    "planted_outliers",
    "planted_rotation",
    "quantize",
    "raw_score",
    "read_codebook",
    "read_features",
    "read_mask",
    "read_registry",
    "read_retention_csv",
    "read_scores_csv",
    "read_trial_list",
    "read_wav",
    "read_znorm_stats",
    "residual_without",
    "run_trials",
    "stage1_remove",
    "stage2_recycle",
    "svd_small",
    "synth_population",
    "train_codebook",
    "write_codebook",
    "write_corpus",
    "write_det_csv",
    "write_features",
    "write_mask",
    "write_registry",
    "write_retention_csv",
    "write_scores_csv",
    "write_summary_csv",
    "write_trial_list",
    "write_wav",
    "write_znorm_stats",
    "znorm",
]
