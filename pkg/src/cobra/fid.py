"""Fréchet distance between Gaussian fits of feature sets.

Used as a distance-based alternative to confidence scoring: each subject's
penultimate-layer features are summarized by a sample mean and covariance and
compared against a healthy reference population:

    d²(x, y) = ‖μ_x − μ_y‖² + tr(Σ_x + Σ_y − 2·(Σ_x Σ_y)^{1/2})

The cross term is evaluated in the symmetric form
tr((√Σ_x · Σ_y · √Σ_x)^{1/2}), which has the same trace but only ever takes
square roots of symmetric PSD matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AssessmentTable, GaussianSummary, _readonly
from .errors import (
    DegenerateVariance,
    DimensionMismatch,
    InsufficientOverlap,
    NotSymmetric,
    TooFewRows,
)
from .stats import CiMethod, CorrelationReport, correlation_report

#: Ridge added to each covariance before taking matrix square roots.
RIDGE = 1e-10

#: Magnitude of allowed negative round-off in the final distance.
NEG_TOL = 1e-8

#: Symmetry tolerance on inputs to the matrix square root.
SYM_TOL = 1e-9

#: Reserved subject id for a pooled healthy reference population.
REFERENCE_ID = "REFERENCE"


@dataclass(frozen=True)
class FeatureSet:
    """Feature vectors of one subject (or of the pooled reference)."""

    subject_id: str
    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = _readonly(np.atleast_2d(self.rows))
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise TooFewRows(f"subject {self.subject_id!r}: no feature rows")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])


def summarize(features: FeatureSet) -> GaussianSummary:
    """Sample mean and unbiased (n−1) covariance, symmetrized."""
    if features.n < 2:
        raise TooFewRows(
            f"subject {features.subject_id!r}: need at least 2 rows, "
            f"got {features.n}"
        )
    mean = features.rows.mean(axis=0)
    cov = np.cov(features.rows, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    cov = (cov + cov.T) / 2.0
    return GaussianSummary(mean=mean, cov=cov, n=features.n)


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues are clamped at zero, so slightly indefinite round-off inputs
    are projected onto the PSD cone. For PSD M the result S satisfies
    ‖S·S − M‖_F ≤ 1e-8·(1 + ‖M‖_F).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    if m.size and float(np.max(np.abs(m - m.T))) > SYM_TOL:
        raise NotSymmetric(f"matrix not symmetric within {SYM_TOL}")
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    w = np.maximum(w, 0.0)
    root = (v * np.sqrt(w)) @ v.T
    return (root + root.T) / 2.0


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """Squared mean gap plus the covariance trace term, clamped at zero."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    eye = np.eye(a.dim)
    cov_a = a.cov + RIDGE * eye
    cov_b = b.cov + RIDGE * eye
    sqrt_a = matrix_sqrt_psd(cov_a)
    inner = matrix_sqrt_psd(sqrt_a @ cov_b @ sqrt_a)
    diff = a.mean - b.mean
    dist = float(
        diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(inner)
    )
    if dist < -NEG_TOL:
        raise DegenerateVariance(
            f"distance {dist!r} below round-off tolerance -{NEG_TOL}"
        )
    return max(dist, 0.0)


@dataclass(frozen=True)
class FidResult:
    """Per-subject distances to the reference plus their correlation with
    the clinical score."""

    distances: tuple[tuple[str, float], ...]  # (subject_id, distance)
    report: CorrelationReport
    pairs: tuple[tuple[str, float, float], ...]  # (subject_id, distance, clinical)
    dropped_unmatched: int


def fid_distances(
    reference: FeatureSet, subjects: Sequence[FeatureSet]
) -> list[tuple[str, float]]:
    """Fréchet distance of each subject's feature set to the reference."""
    ref = summarize(reference)
    distances: list[tuple[str, float]] = []
    for fs in subjects:
        if fs.dim != reference.dim:
            raise DimensionMismatch(
                f"subject {fs.subject_id!r} has dimension {fs.dim}, "
                f"reference has {reference.dim}"
            )
        distances.append((fs.subject_id, frechet_distance(summarize(fs), ref)))
    return distances


def fid_report(
    reference: FeatureSet,
    subjects: Sequence[FeatureSet],
    assess: AssessmentTable,
    ci_method: CiMethod = CiMethod.FISHER_Z,
    level: float = 0.95,
    bootstrap_iters: int = 2000,
    seed: int = 0,
    distances: Sequence[tuple[str, float]] | None = None,
) -> FidResult:
    """Distance of every subject to the healthy reference, correlated with
    the clinical assessment (expected negative against healthy-high scores).

    Pass precomputed ``distances`` to skip recomputing them.
    """
    if distances is None:
        distances = fid_distances(reference, subjects)
    pairs = [
        (sid, dist, assess[sid]) for sid, dist in distances if sid in assess
    ]
    dropped = len(distances) - len(pairs)
    if len(pairs) < 3:
        raise InsufficientOverlap(
            f"only {len(pairs)} subject(s) joinable with assessments; need 3"
        )
    report = correlation_report(
        [p[1] for p in pairs], [p[2] for p in pairs],
        ci_method, level, bootstrap_iters, seed,
    )
    return FidResult(tuple(distances), report, tuple(pairs), dropped)
