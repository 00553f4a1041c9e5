"""Subject-level confidence-based anomaly scoring and evaluation toolkit."""

__version__ = "0.1.0"

from .core import (
    AssessmentTable,
    ClassSet,
    GaussianSummary,
    ProbabilityRecord,
    SubjectDataset,
    SubjectScore,
    partition_by_subject,
    validate_record,
)
from .errors import CobraError
from .fid import FeatureSet, fid_report, frechet_distance, matrix_sqrt_psd, summarize
from .refmodel import RefModel, TrainConfig, forward, loss_and_grad, predict_dataset, train
from .scoring import (
    MissingPolicy,
    ScoreConfig,
    cobra_by_group,
    cobra_score,
    cohort_scores,
    confidence,
    predict_class,
)
from .stats import (
    CiMethod,
    CorrelationReport,
    DensityCurve,
    PerformanceReport,
    bootstrap_ci,
    correlate_scores,
    fisher_ci,
    kde,
    pearson,
    performance_metrics,
    stratified_correlation,
)
from .synth import ConfounderConfig, SynthConfig, SynthSubject, generate_cohort, generate_healthy, generate_subject

__all__ = [
    "AssessmentTable",
    "CiMethod",
    "ClassSet",
    "CobraError",
    "ConfounderConfig",
    "CorrelationReport",
    "DensityCurve",
    "FeatureSet",
    "GaussianSummary",
    "MissingPolicy",
    "PerformanceReport",
    "ProbabilityRecord",
    "RefModel",
    "ScoreConfig",
    "SubjectDataset",
    "SubjectScore",
    "SynthConfig",
    "SynthSubject",
    "TrainConfig",
    "bootstrap_ci",
    "cobra_by_group",
    "cobra_score",
    "cohort_scores",
    "confidence",
    "correlate_scores",
    "fid_report",
    "fisher_ci",
    "forward",
    "frechet_distance",
    "generate_cohort",
    "generate_healthy",
    "generate_subject",
    "kde",
    "loss_and_grad",
    "matrix_sqrt_psd",
    "partition_by_subject",
    "pearson",
    "performance_metrics",
    "predict_class",
    "predict_dataset",
    "stratified_correlation",
    "summarize",
    "train",
    "validate_record",
    "__version__",
]
