"""Semi-automatic construction of speaker corpora from broadcast archives."""
from .agreement import RatingMatrix, fleiss_kappa, majority_vote, problem_rates
from .csd import CsdInputs, StageReport, clean_speech, stage_report
from .diarizer import ClusteringConfig, CosineAHC, ahc_cluster
from .formats import (
    AudioBuffer,
    EmbeddingSet,
    FormatError,
    RttmRecord,
    parse_rttm,
    parse_uem,
    read_embeddings,
    read_wav,
    write_eaf,
    write_rttm,
)
from .metrics import DerBreakdown, der, eer, operating_point, pr_sweep, segment_recall
from .nse import NonSpeechEventDetector, NseConfig, detect_nse
from .planner import CategoryKey, QuotaLedger, categorize, quota_report
from .speaker_id import IdentificationConfig, SpeakerIdentifier, identify
from .timeline import Annotation, Segment, Timeline

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AudioBuffer",
    "CategoryKey",
    "ClusteringConfig",
    "CosineAHC",
    "CsdInputs",
    "DerBreakdown",
    "EmbeddingSet",
    "FormatError",
    "IdentificationConfig",
    "NonSpeechEventDetector",
    "NseConfig",
    "QuotaLedger",
    "RatingMatrix",
    "RttmRecord",
    "Segment",
    "SpeakerIdentifier",
    "StageReport",
    "Timeline",
    "ahc_cluster",
    "categorize",
    "clean_speech",
    "der",
    "detect_nse",
    "eer",
    "fleiss_kappa",
    "identify",
    "majority_vote",
    "operating_point",
    "parse_rttm",
    "parse_uem",
    "pr_sweep",
    "problem_rates",
    "quota_report",
    "read_embeddings",
    "read_wav",
    "segment_recall",
    "stage_report",
    "write_eaf",
    "write_rttm",
]
