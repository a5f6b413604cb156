"""Stuttered-speech disfluency classification toolkit: corpus curation,
speaker-exclusive splits, log-Mel frontend, encoder fine-tuning with layer
freezing, and F1 evaluation."""

from .corpus import (
    AnnotationRow,
    ClipRecord,
    DisfluencyClass,
    RawLabel,
    SplitAssignment,
    build_split,
    load_catalog,
    rank_speakers,
    read_manifest,
    write_manifest,
)
from .curation import CurationConfig, CurationReport, NoiseGateConfig, run_pipeline
from .encoder import (
    EncoderClassifier,
    EncoderConfig,
    FreezePlan,
    FreezeStrategy,
    apply_freeze,
    count_parameters,
)
from .evaluation import compare_strategies, confusion, evaluate, f1_scores
from .frontend import FrontendConfig, MelFeatures, load_clip, log_mel
from .training import TrainConfig, TrainRun, measure_runtime, train

__version__ = "0.1.0"

__all__ = [
    "AnnotationRow",
    "ClipRecord",
    "CurationConfig",
    "CurationReport",
    "DisfluencyClass",
    "EncoderClassifier",
    "EncoderConfig",
    "FreezePlan",
    "FreezeStrategy",
    "FrontendConfig",
    "MelFeatures",
    "NoiseGateConfig",
    "RawLabel",
    "SplitAssignment",
    "TrainConfig",
    "TrainRun",
    "apply_freeze",
    "build_split",
    "compare_strategies",
    "confusion",
    "count_parameters",
    "evaluate",
    "f1_scores",
    "load_catalog",
    "load_clip",
    "log_mel",
    "measure_runtime",
    "rank_speakers",
    "read_manifest",
    "run_pipeline",
    "train",
    "write_manifest",
]
